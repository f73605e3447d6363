import logging
import os

import pytest

from verigraph.retrieval import build_index

from helpers import fixture


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    # a developer's VERIGRAPH_* settings must not leak into tests
    for name in list(os.environ):
        if name.startswith("VERIGRAPH_"):
            monkeypatch.delenv(name)


@pytest.fixture
def corpus_index():
    return build_index(fixture("corpus.jsonl"))


@pytest.fixture
def vglog(caplog):
    """
    caplog wired straight to the shared logger, which does not propagate
    once the CLI has configured it.
    """
    logger = logging.getLogger('vglogger')
    level = logger.level
    logger.addHandler(caplog.handler)
    logger.setLevel(logging.DEBUG)
    yield caplog
    logger.removeHandler(caplog.handler)
    logger.setLevel(level)
