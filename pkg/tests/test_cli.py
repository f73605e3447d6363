import json
import os

import pytest
from click.testing import CliRunner

from verigraph import cli
from verigraph.config import load_config
from verigraph.evaluate import ClaimOutcome
from verigraph.nodes import Label

from helpers import fixture, judge, node, plan_json, think

CLAIM = "Gregg Rolie, a founding member of Santana, also co-founded Journey."


def invoke(*args):
    return CliRunner().invoke(cli.main, ["-v", "CRITICAL", *args])


def write_script(path, entries):
    with open(path, "w", encoding="utf-8") as script_file:
        for role, response in entries:
            script_file.write(json.dumps({"role": role, "response": response}) + "\n")
    return str(path)


@pytest.fixture(autouse=True)
def workspace(tmp_path, monkeypatch):
    # keep the upward search for verigraph.toml inside the test
    monkeypatch.chdir(tmp_path)
    return tmp_path


def verify_static(out_dir):
    return invoke("verify", CLAIM, "--corpus", fixture("corpus.jsonl"), "--script", fixture("static_happy.jsonl"),
                  "--out", str(out_dir))


class TestInit:
    def test_creates_loadable_config(self, workspace):
        result = invoke("init")
        assert result.exit_code == 0
        path = workspace / "verigraph.toml"
        assert path.is_file()
        config = load_config(str(path))
        assert config["mode"] == "static"
        assert config.source("mode") == "file"

    def test_keeps_existing(self, workspace):
        (workspace / "verigraph.toml").write_text('mode = "dynamic"\n', encoding="utf-8")
        assert invoke("init").exit_code == 0
        assert (workspace / "verigraph.toml").read_text(encoding="utf-8") == 'mode = "dynamic"\n'


class TestPlan:
    def test_prints_graph(self):
        result = invoke("plan", CLAIM, "--script", fixture("static_happy.jsonl"))
        assert result.exit_code == 0
        graph = json.loads(result.stdout)
        assert [entry["id"] for entry in graph["nodes"]] == ["s1", "s2", "t1", "j1"]

    def test_fallback_exit_code(self, workspace):
        script = write_script(workspace / "garbage.jsonl", [("PLANNER", "no plan")] * 3)
        result = invoke("plan", CLAIM, "--script", script)
        assert result.exit_code == 2
        assert [entry["id"] for entry in json.loads(result.stdout)["nodes"]] == ["s1", "j1"]

    def test_unreadable_script(self, workspace):
        assert invoke("plan", CLAIM, "--script", str(workspace / "missing.jsonl")).exit_code == 1

    def test_no_model_configured(self):
        assert invoke("plan", CLAIM).exit_code == 1


class TestVerify:
    def test_static_happy_path_then_replay(self, workspace):
        out_dir = workspace / "run"
        result = verify_static(out_dir)
        assert result.exit_code == 0
        assert result.stdout == "SUPPORTS: The corpus names Rolie as a founder of both bands.\n"
        for name in ("graph.json", "transcript.jsonl", "result.json", "events.jsonl", "run.json", "timing.json"):
            assert (out_dir / name).is_file()
        assert invoke("replay", str(out_dir)).exit_code == 0

    def test_edited_transcript_diverges(self, workspace):
        out_dir = workspace / "run"
        assert verify_static(out_dir).exit_code == 0
        transcript = out_dir / "transcript.jsonl"
        rows = [json.loads(line) for line in transcript.read_text(encoding="utf-8").splitlines()]
        for row in rows:
            if row["role"] == "JUDGE":
                row["response"] = judge("REFUTES", "edited")
        transcript.write_text("".join(json.dumps(row) + "\n" for row in rows), encoding="utf-8")
        result = invoke("replay", str(out_dir))
        assert result.exit_code == 4
        assert "replay diverged at $.verdict.label" in result.output

    def test_missing_response_diverges(self, workspace):
        out_dir = workspace / "run"
        assert verify_static(out_dir).exit_code == 0
        transcript = out_dir / "transcript.jsonl"
        rows = [line for line in transcript.read_text(encoding="utf-8").splitlines()
                if json.loads(line)["role"] != "JUDGE"]
        transcript.write_text("\n".join(rows) + "\n", encoding="utf-8")
        assert invoke("replay", str(out_dir)).exit_code == 4

    def test_replay_without_transcript(self, workspace):
        out_dir = workspace / "run"
        assert verify_static(out_dir).exit_code == 0
        os.remove(out_dir / "transcript.jsonl")
        assert invoke("replay", str(out_dir)).exit_code == 1

    def test_static_without_corpus(self):
        result = invoke("verify", CLAIM, "--script", fixture("static_happy.jsonl"))
        assert result.exit_code == 1

    def test_static_with_budget(self):
        result = invoke("verify", CLAIM, "--budget", "2", "--corpus", fixture("corpus.jsonl"),
                        "--script", fixture("static_happy.jsonl"))
        assert result.exit_code == 1

    def test_bad_option_value(self):
        assert invoke("verify", CLAIM, "--mode", "sideways").exit_code == 1

    def test_dynamic_graft_then_replay(self, workspace):
        out_dir = workspace / "run"
        result = invoke("verify", CLAIM, "--mode", "dynamic", "--fixtures", fixture("search"),
                        "--script", fixture("santana_journey.jsonl"), "--out", str(out_dir))
        assert result.exit_code == 0
        assert result.stdout.startswith("SUPPORTS: ")
        stored = json.loads((out_dir / "result.json").read_text(encoding="utf-8"))
        assert stored["stats"]["modification_count"] == 1
        assert stored["stats"]["initial_counts"]["SEARCH"] == 1
        assert stored["stats"]["final_counts"]["SEARCH"] == 2
        assert len(os.listdir(out_dir / "search")) == 2
        assert invoke("replay", str(out_dir)).exit_code == 0

    def test_forced_verdict_exit_code(self, workspace):
        initial = plan_json(node("s1", "SEARCH", "Gregg Rolie"), node("t1", "THINK", "Rolie co-founded Journey", ["s1"]),
                            node("j1", "JUDGE", CLAIM, ["t1"]))
        sub = plan_json(node("s1", "SEARCH", "Journey founders"), node("t1", "THINK", "Rolie co-founded Journey", ["s1"]))
        entries = [("PLANNER", initial)] + [("PLANNER", sub)] * 3
        entries += [("SEARCH_QUERY", "unrecorded query")] * 4
        entries += [("THINK", think(missing="who founded Journey"))] * 4
        entries += [("JUDGE", judge("REFUTES", "could not confirm"))]
        script = write_script(workspace / "stuck.jsonl", entries)
        result = invoke("verify", CLAIM, "--mode", "dynamic", "--budget", "3", "--fixtures", fixture("search"),
                        "--script", script)
        assert result.exit_code == 3
        assert result.stdout == "REFUTES: could not confirm\n"


def eval_script(path, count):
    entries = []
    for _ in range(count):
        entries.append(("PLANNER", plan_json(node("s1", "SEARCH", "q"), node("j1", "JUDGE", "claim", ["s1"]))))
        entries.append(("SEARCH_QUERY", "Santana"))
        entries.append(("JUDGE", judge("SUPPORTS")))
    return write_script(path, entries)


class TestEval:
    def test_limit_and_report(self, workspace):
        script = eval_script(workspace / "eval.jsonl", 2)
        runs_dir = workspace / "runs"
        result = invoke("eval", fixture("hover_dev.jsonl"), "--corpus", fixture("corpus.jsonl"), "--script", script,
                        "--runs-dir", str(runs_dir), "--limit", "2", "-w", "1")
        assert result.exit_code == 0
        report = json.loads((runs_dir / "hover_dev" / "report.json").read_text(encoding="utf-8"))
        assert report["total"] == 2
        assert f"Macro-F1: {100 * report['macro_f1']:.2f}" in result.stdout
        assert (runs_dir / "hover_dev" / "h1" / "result.json").is_file()

    def test_failed_claims_do_not_change_exit_code(self, workspace):
        script = eval_script(workspace / "eval.jsonl", 1)
        result = invoke("eval", fixture("hover_dev.jsonl"), "--corpus", fixture("corpus.jsonl"), "--script", script,
                        "--runs-dir", str(workspace / "runs"), "--limit", "2", "-w", "1")
        assert result.exit_code == 0
        assert "FAILED h2" in result.stdout

    def test_hard_from_without_hard_claims(self, workspace):
        outcomes = [ClaimOutcome("h1", CLAIM, Label.SUPPORTS, 2, prediction=Label.SUPPORTS).to_dict()]
        report = workspace / "report.json"
        report.write_text(json.dumps({"outcomes": outcomes}), encoding="utf-8")
        result = invoke("eval", fixture("hover_dev.jsonl"), "--corpus", fixture("corpus.jsonl"),
                        "--script", fixture("static_happy.jsonl"), "--hard-from", str(report))
        assert result.exit_code == 0
        assert not (workspace / "runs").exists()

    def test_missing_dataset(self, workspace):
        assert invoke("eval", str(workspace / "nope.jsonl"), "--corpus", fixture("corpus.jsonl")).exit_code == 1

    def test_config_file_is_used(self, workspace):
        (workspace / "verigraph.toml").write_text(f'corpus = "{fixture("corpus.jsonl")}"\nclaim_workers = 1\n',
                                                  encoding="utf-8")
        script = eval_script(workspace / "eval.jsonl", 1)
        result = invoke("eval", fixture("hover_dev.jsonl"), "--script", script, "--limit", "1")
        assert result.exit_code == 0
        assert (workspace / "runs" / "hover_dev" / "report.json").is_file()


class TestMain:
    def test_version(self):
        result = invoke("--version")
        assert result.exit_code == 0
        assert result.stdout.strip() == cli.cli_version()

    def test_unknown_config_key(self, workspace):
        (workspace / "verigraph.toml").write_text("colour = 1\n", encoding="utf-8")
        assert invoke("plan", CLAIM, "--script", fixture("static_happy.jsonl")).exit_code == 1
