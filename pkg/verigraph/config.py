import logging
import os
import tomllib

from . import utils
from .errors import ConfigError
from .executor import RunConfig

log = logging.getLogger('vglogger')

ENV_PREFIX = "VERIGRAPH_"

# None means "decided elsewhere": budget and strategy follow the mode
DEFAULTS = {
    "mode": "static",
    "budget": None,
    "max_inflight": 4,
    "node_timeout": 60.0,
    "strategy": None,
    "graft_mode": "rewire",
    "top_k": 10,
    "max_plan_nodes": 12,
    "prompt_dir": None,
    "corpus": None,
    "fixtures": None,
    "bm25_k1": 0.9,
    "bm25_b": 0.4,
    "llm_endpoint": None,
    "llm_model": None,
    "llm_api_key": None,
    "llm_timeout": 60.0,
    "search_provider": "serper",
    "search_endpoint": None,
    "search_api_key": None,
    "search_proxy": None,
    "search_timeout": 20.0,
    "search_concurrency": 4,
    "claim_workers": 2,
    "runs_dir": "runs",
}

KEY_TYPES = {
    "mode": str, "budget": int, "max_inflight": int, "node_timeout": float, "strategy": str,
    "graft_mode": str, "top_k": int, "max_plan_nodes": int, "prompt_dir": str, "corpus": str,
    "fixtures": str, "bm25_k1": float, "bm25_b": float, "llm_endpoint": str, "llm_model": str,
    "llm_api_key": str, "llm_timeout": float, "search_provider": str, "search_endpoint": str,
    "search_api_key": str, "search_proxy": str, "search_timeout": float, "search_concurrency": int,
    "claim_workers": int, "runs_dir": str,
}

# relative paths in a config file are relative to the file
PATH_KEYS = ("prompt_dir", "corpus", "fixtures", "runs_dir")

SECRET_KEYS = ("llm_api_key", "search_api_key")


def _coerce(key, value, origin):
    kind = KEY_TYPES[key]
    if value is None:
        return None
    if isinstance(value, bool) or (kind is str and not isinstance(value, str)):
        raise ConfigError(f"{origin}: `{key}` must be {kind.__name__}, got {value!r}")
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{origin}: `{key}` must be {kind.__name__}, got {value!r}") from None


class CliConfig:
    """
    Settings resolved from defaults, then ``verigraph.toml``, then
    ``VERIGRAPH_*`` environment variables, then command-line flags.
    """

    def __init__(self, values, sources, path=None):
        self.values = values
        self.sources = sources
        self.path = path

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        value = self.values.get(key)
        return default if value is None else value

    def source(self, key):
        return self.sources[key]

    def run_config(self):
        return RunConfig.for_mode(
            self["mode"],
            budget=self["budget"],
            max_inflight=self["max_inflight"],
            node_timeout=self["node_timeout"],
            strategy=self["strategy"],
            graft_mode=self["graft_mode"],
            top_k=self["top_k"],
            max_plan_nodes=self["max_plan_nodes"],
        )

    def public(self):
        return {key: ("***" if key in SECRET_KEYS and value else value) for key, value in self.values.items()}


def _read_file(path):
    try:
        with open(path, "rb") as config_file:
            return tomllib.load(config_file)
    except OSError as err:
        raise ConfigError(f"cannot read config file `{path}`: {err}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from err


def load_config(path=None, env=None, flags=None, search_from=None):
    values = dict(DEFAULTS)
    sources = {key: "default" for key in DEFAULTS}

    if path is None:
        directory = utils.config_dir(search_from)
        if directory is not None:
            path = os.path.join(directory, utils.CONFIG_FILENAME)
    if path is not None:
        log.debug(f"Reading configuration from `{path}`.")
        base = os.path.dirname(os.path.abspath(path))
        for key, value in _read_file(path).items():
            if key not in DEFAULTS:
                raise ConfigError(f"{path}: unknown key `{key}`")
            value = _coerce(key, value, path)
            if key in PATH_KEYS and value is not None:
                value = os.path.join(base, os.path.expanduser(value))
            values[key] = value
            sources[key] = "file"

    for name, raw in sorted((env or {}).items()):
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        if key not in DEFAULTS:
            raise ConfigError(f"unknown environment variable `{name}`")
        values[key] = _coerce(key, raw, name) if raw != "" else None
        sources[key] = "env"

    for key, value in (flags or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown option `{key}`")
        if value is None:
            continue
        values[key] = _coerce(key, value, "command line")
        sources[key] = "flag"

    return CliConfig(values, sources, path)
