import click
import click_logging
import json
import logging
import os
import shutil
import sys
import tempfile
from . import utils, static
from . import version as cli_version
from .config import load_config
from .errors import ScriptMiss, VerigraphError
from .evaluate import load_dataset, load_outcomes, run_eval, select_hard_subset, HARD_SUBSET_SIZE
from .executor import Engine, RunConfig
from .gateway import Gateway, RemoteBackend, ScriptedBackend
from .planner import Planner, PlanRequest
from .prompts import PromptTemplates
from .retrieval import (FixtureSearchClient, Strategy, WebRetriever, WebSearchClient, WikiRetriever,
                        build_index)


log = logging.getLogger('vglogger')
click_logging.basic_config(log)

# exit codes
OK = 0
FAILURE = 1
FALLBACK = 2
FORCED = 3
DIVERGED = 4


class CliError(click.ClickException):
    def __init__(self, message, exit_code=FAILURE):
        super().__init__(message)
        self.exit_code = exit_code


def raise_cli_error(message, exit_code=FAILURE):
    raise CliError(" ".join(str(message).split()), exit_code)


class VerigraphGroup(click.Group):
    """
    Commands return their exit code; usage errors exit with 1 like any
    other failure.
    """

    def main(self, args=None, prog_name=None, **extra):
        extra["standalone_mode"] = False
        try:
            rv = super().main(args=args, prog_name=prog_name, **extra)
        except click.ClickException as err:
            err.show()
            sys.exit(FAILURE if isinstance(err, click.UsageError) else err.exit_code)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(FAILURE)
        sys.exit(rv if isinstance(rv, int) else OK)


def _settings(ctx, **flags):
    try:
        return load_config(ctx.obj.get("config"), os.environ, flags)
    except VerigraphError as err:
        raise_cli_error(err)


def _templates(settings):
    return PromptTemplates(settings.get("prompt_dir"))


def _backend(settings, script):
    if script is not None:
        try:
            return ScriptedBackend.from_jsonl(script)
        except (OSError, VerigraphError) as err:
            raise_cli_error(f"cannot load script `{script}`: {err}")
    try:
        return RemoteBackend(settings.get("llm_endpoint"), settings.get("llm_model"),
                             api_key=settings.get("llm_api_key"), timeout=settings["llm_timeout"])
    except VerigraphError as err:
        raise_cli_error(f"{err}; set VERIGRAPH_LLM_ENDPOINT and VERIGRAPH_LLM_MODEL or pass --script")


def _retrieval(settings, run_config):
    """
    Returns a retriever factory taking the run directory, plus the
    settings replay needs to rebuild it.
    """
    if run_config.strategy is Strategy.WIKI:
        corpus = settings.get("corpus")
        if corpus is None:
            raise_cli_error("corpus retrieval needs a corpus: pass --corpus PATH or set `corpus`")
        try:
            index = build_index(corpus)
        except (OSError, VerigraphError) as err:
            raise_cli_error(f"cannot index corpus `{corpus}`: {err}")
        k1, b = settings["bm25_k1"], settings["bm25_b"]
        info = {"retrieval": "corpus", "corpus": os.path.abspath(corpus), "bm25_k1": k1, "bm25_b": b}
        return (lambda out_dir: WikiRetriever(index, k1=k1, b=b)), info

    def record_dir(out_dir):
        return os.path.join(out_dir, "search") if out_dir is not None else None

    fixtures = settings.get("fixtures")
    if fixtures is not None:
        if not os.path.isdir(fixtures):
            raise_cli_error(f"search fixture directory `{fixtures}` does not exist")
        info = {"retrieval": "fixtures", "fixtures": os.path.abspath(fixtures)}
        return (lambda out_dir: WebRetriever(FixtureSearchClient(fixtures, record_dir=record_dir(out_dir)))), info

    if settings.get("search_api_key") is None:
        log.warning("No search API key configured (VERIGRAPH_SEARCH_API_KEY); web searches will likely fail.")

    def factory(out_dir):
        client = WebSearchClient(
            provider=settings["search_provider"],
            endpoint=settings.get("search_endpoint"),
            api_key=settings.get("search_api_key"),
            timeout=settings["search_timeout"],
            max_concurrency=settings["search_concurrency"],
            proxy=settings.get("search_proxy"),
            record_dir=record_dir(out_dir),
        )
        return WebRetriever(client)

    try:
        factory(None)
    except ValueError as err:
        raise_cli_error(err)
    return factory, {"retrieval": "web", "search_provider": settings["search_provider"]}


def _engine(settings, run_config, script):
    backend = _backend(settings, script)
    factory, info = _retrieval(settings, run_config)
    prompt_dir = settings.get("prompt_dir")
    info["prompt_dir"] = os.path.abspath(prompt_dir) if prompt_dir is not None else None
    templates = _templates(settings)
    return Engine(run_config, backend, factory, planner=Planner(templates), templates=templates, settings=info)


def _run_config(settings):
    try:
        return settings.run_config()
    except VerigraphError as err:
        raise_cli_error(err)


#  Click command-line interface
@click.group(cls=VerigraphGroup)
# Allow a verbosity command:
@click_logging.simple_verbosity_option(log, help="Sets the severity of diagnostics: DEBUG for all; CRITICAL for almost none.  ERROR, WARNING, or INFO (default) are also options.")
@click.version_option(cli_version(), message=cli_version())
@click.option('-c', '--config', 'config_path', type=click.Path(dir_okay=False),
              help="Configuration file to use instead of the nearest `verigraph.toml`.")
@click.pass_context
def main(ctx, config_path):
    """
    Command line tools for verifying claims with dynamically
    planned verification graphs.
    """
    ctx.ensure_object(dict)
    ctx.obj["config"] = config_path
    if config_path is None and utils.config_dir() is not None:
        log.info(f"Configuration found in `{utils.config_dir()}`.")


# verigraph init
@main.command(short_help="Generates a verigraph.toml configuration in the current directory.")
def init():
    """
    Generates a `verigraph.toml` with the default settings in the current
    directory, ready to edit.
    """
    directory_fullpath = os.path.abspath('.')
    if utils.config_dir(directory_fullpath) is not None:
        log.warning(f"A configuration already exists in `{utils.config_dir(directory_fullpath)}`.")
        log.warning("No configuration will be generated.")
        return OK
    config_path = os.path.join(directory_fullpath, utils.CONFIG_FILENAME)
    shutil.copyfile(static.filepath(utils.CONFIG_FILENAME), config_path)
    log.info(f"Success! Open `{config_path}` to edit your configuration.")
    return OK


# verigraph plan
@main.command(short_help="Prints the initial verification plan of a claim.")
@click.argument('claim')
@click.option('-s', '--script', type=click.Path(), help="Scripted model responses (JSON lines) instead of a live model.")
@click.option('-m', '--mode', type=click.Choice(['static', 'dynamic'], case_sensitive=False))
@click.option('--max-nodes', type=int, help="Largest plan accepted from the model.")
@click.pass_context
def plan(ctx, claim, script, mode, max_nodes):
    """
    Plans CLAIM and prints the validated graph as JSON. Exits with 2 when
    the model never produced a usable plan and the fallback plan is shown.

    Example: verigraph plan "Gregg Rolie played keyboards for Santana." --script plan.jsonl
    """
    settings = _settings(ctx, mode=mode, max_plan_nodes=max_nodes)
    backend = _backend(settings, script)
    if not claim.strip():
        raise_cli_error("the claim is empty")
    request = PlanRequest(claim, max_nodes=settings["max_plan_nodes"], mode=_run_config(settings).mode)
    try:
        result = Planner(_templates(settings)).plan(request, Gateway(backend))
    except VerigraphError as err:
        raise_cli_error(err)
    click.echo(result.graph.to_json(), nl=False)
    return FALLBACK if result.fallback else OK


# verigraph verify
@main.command(short_help="Verifies a single claim.")
@click.argument('claim')
@click.option('-m', '--mode', type=click.Choice(['static', 'dynamic'], case_sensitive=False),
              help="static: one pass over the local corpus; dynamic: graft new subtrees when evidence is missing.")
@click.option('-b', '--budget', type=int, help="Maximum graph modifications (dynamic mode, default 3).")
@click.option('--corpus', type=click.Path(), help="JSONL paragraph corpus for BM25 retrieval.")
@click.option('--fixtures', type=click.Path(), help="Directory of recorded web-search results (offline dynamic runs).")
@click.option('-s', '--script', type=click.Path(), help="Scripted model responses (JSON lines) instead of a live model.")
@click.option('-o', '--out', type=click.Path(file_okay=False), help="Directory for the run artifacts.")
@click.option('--graft-mode', type=click.Choice(['rewire', 'replace'], case_sensitive=False))
@click.option('--max-inflight', type=int, help="Nodes running at once.")
@click.option('--timeout', 'node_timeout', type=float, help="Seconds allowed per node.")
@click.pass_context
def verify(ctx, claim, mode, budget, corpus, fixtures, script, out, graft_mode, max_inflight, node_timeout):
    """
    Verifies CLAIM and prints the verdict. Exits with 3 when the verdict
    had to be forced.

    \b
    Examples:
      verigraph verify "..." --corpus wiki.jsonl --script run.jsonl --out runs/one
      verigraph verify "..." --mode dynamic --budget 3
    """
    settings = _settings(ctx, mode=mode, budget=budget, corpus=corpus, fixtures=fixtures,
                         graft_mode=graft_mode, max_inflight=max_inflight, node_timeout=node_timeout)
    run_config = _run_config(settings)
    engine = _engine(settings, run_config, script)
    try:
        result = engine.verify(claim, out)
    except (VerigraphError, OSError, ValueError) as err:
        raise_cli_error(err)
    click.echo(result.verdict.output_text())
    return FORCED if result.verdict.forced else OK


# verigraph eval
@main.command(name="eval", short_help="Evaluates a claim dataset.")
@click.argument('dataset', type=click.Path())
@click.option('-f', '--format', 'dataset_format', default='hover', show_default=True,
              type=click.Choice(['hover', 'feverous', 'custom'], case_sensitive=False))
@click.option('-m', '--mode', type=click.Choice(['static', 'dynamic'], case_sensitive=False))
@click.option('-b', '--budget', type=int)
@click.option('-n', '--limit', type=int, help="Evaluate only the first N claims.")
@click.option('--hard-from', type=click.Path(), help="Report of an earlier run; evaluate only the claims it got wrong.")
@click.option('--hard-size', type=int, default=HARD_SUBSET_SIZE, show_default=True)
@click.option('--corpus', type=click.Path())
@click.option('--fixtures', type=click.Path())
@click.option('-s', '--script', type=click.Path(), help="Scripted model responses (JSON lines) instead of a live model.")
@click.option('--runs-dir', type=click.Path(file_okay=False), help="Where per-claim artifacts and the report go.")
@click.option('-w', '--workers', 'claim_workers', type=int, help="Claims verified at once.")
@click.pass_context
def evaluate(ctx, dataset, dataset_format, mode, budget, limit, hard_from, hard_size, corpus, fixtures,
             script, runs_dir, claim_workers):
    """
    Verifies every claim of DATASET (JSON lines), then prints macro-F1,
    node statistics and timing. Per-claim failures are listed in the
    report and do not change the exit code.
    """
    settings = _settings(ctx, mode=mode, budget=budget, corpus=corpus, fixtures=fixtures,
                         runs_dir=runs_dir, claim_workers=claim_workers)
    run_config = _run_config(settings)
    try:
        records = load_dataset(dataset, dataset_format)
    except (OSError, VerigraphError) as err:
        raise_cli_error(f"cannot load dataset `{dataset}`: {err}")
    name = os.path.splitext(os.path.basename(dataset))[0]
    if hard_from is not None:
        try:
            hard = select_hard_subset(load_outcomes(hard_from), n=hard_size)
        except (OSError, ValueError, KeyError) as err:
            raise_cli_error(f"cannot read `{hard_from}`: {err}")
        hard_ids = {record.id for record in hard}
        records = [record for record in records if record.id in hard_ids]
        name = f"{name}-hard"
    if limit is not None:
        records = records[:max(0, limit)]
    if not records:
        log.warning("No claims to evaluate; the report is empty.")
        return OK
    engine = _engine(settings, run_config, script)
    report = run_eval(records, engine, runs_dir=settings["runs_dir"], workers=settings["claim_workers"],
                      dataset=name)
    click.echo(report.render_table(), nl=False)
    return OK


# verigraph replay
@main.command(short_help="Re-runs a recorded claim and checks the result is identical.")
@click.argument('run_dir', type=click.Path(file_okay=False))
def replay(run_dir):
    """
    Re-executes the run stored in RUN_DIR against its recorded model
    transcript (and recorded searches) and compares result.json byte for
    byte. Exits with 4 and names the first differing field on divergence.
    """
    paths = {name: os.path.join(run_dir, name) for name in ("transcript.jsonl", "run.json", "result.json")}
    for name, path in paths.items():
        if not os.path.isfile(path):
            raise_cli_error(f"`{run_dir}` has no {name}")
    try:
        info = utils.read_json(paths["run.json"])
        run_config = RunConfig.from_dict(info["config"])
        recorded = info.get("settings", {})
        backend = ScriptedBackend.from_jsonl(paths["transcript.jsonl"])
        templates = PromptTemplates(recorded.get("prompt_dir"))
        if recorded.get("retrieval") == "corpus":
            index = build_index(recorded["corpus"])
            def factory(out_dir):
                return WikiRetriever(index, k1=recorded["bm25_k1"], b=recorded["bm25_b"])
        else:
            search_dir = os.path.join(run_dir, "search")
            def factory(out_dir):
                return WebRetriever(FixtureSearchClient(search_dir))
        engine = Engine(run_config, backend, factory, planner=Planner(templates), templates=templates,
                        settings=recorded)
    except (OSError, ValueError, KeyError, TypeError, VerigraphError) as err:
        raise_cli_error(f"cannot set up replay of `{run_dir}`: {err}")

    with open(paths["result.json"], "r", encoding="utf-8") as result_file:
        stored = result_file.read()
    with tempfile.TemporaryDirectory() as scratch:
        try:
            result = engine.verify(info["claim"], os.path.join(scratch, "run"))
        except ScriptMiss as err:
            click.echo(f"replay diverged: {err}", err=True)
            return DIVERGED
        except (VerigraphError, OSError, ValueError) as err:
            raise_cli_error(err)
    regenerated = result.to_json()
    if regenerated == stored:
        log.info(f"Replay of `{run_dir}` is identical.")
        return OK
    try:
        where = utils.first_difference(json.loads(stored), result.to_dict()) or "$"
    except ValueError:
        where = "$"
    click.echo(f"replay diverged at {where}", err=True)
    return DIVERGED
