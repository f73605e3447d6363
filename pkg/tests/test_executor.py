import itertools
import json
import os
import random
import threading
import time
from concurrent import futures

import pytest

from verigraph.errors import ConfigError, SearchFailed
from verigraph.executor import RUN_FILES, Engine, EventLog, Executor, RunConfig, RunResult, run_claim
from verigraph.gateway import Gateway, RecordingBackend, Role, ScriptedBackend, Transcript
from verigraph.graph import GraftMode, GraphMode, NodeStatus, validate
from verigraph.nodes import Label, Verdict
from verigraph.planner import Planner
from verigraph.retrieval import FixtureSearchClient, Strategy, WebRetriever, WikiRetriever

from helpers import StaticRetriever, StubPlanner, build_graph, evidence, fixture, judge, node, plan_json, think

CLAIM = "Gregg Rolie, a founding member of Santana, also co-founded Journey."


def dynamic(budget=3, **overrides):
    overrides.setdefault("strategy", Strategy.WIKI)
    return RunConfig.for_mode(GraphMode.DYNAMIC, budget=budget, **overrides)


def event_names(result, name=None):
    names = [event.event for event in result.events]
    return names if name is None else [n for n in names if n == name]


def santana_run(max_inflight=4, backend=None):
    backend = backend or ScriptedBackend.from_jsonl(fixture("santana_journey.jsonl"))
    retriever = WebRetriever(FixtureSearchClient(fixture("search")))
    config = RunConfig.for_mode(GraphMode.DYNAMIC, max_inflight=max_inflight)
    return run_claim(CLAIM, config, Planner(), Gateway(backend), retriever)


class PromptSpy:
    def __init__(self, inner):
        self.inner = inner
        self.prompts = []
        self._lock = threading.Lock()

    def complete(self, request):
        with self._lock:
            self.prompts.append((request.role, request.prompt))
        return self.inner.complete(request)


class FlakyRetriever(StaticRetriever):
    """
    Fails the first search, then answers like StaticRetriever.
    """

    def search(self, query, k=10):
        with self._lock:
            first = not self.queries
            self.queries.append(query)
        if first:
            raise SearchFailed("search API returned 503")
        return self.items.truncated(k)


class TestRunConfig:
    def test_static_defaults(self):
        config = RunConfig.for_mode("static")
        assert (config.budget, config.strategy) == (0, Strategy.WIKI)

    def test_dynamic_defaults(self):
        config = RunConfig.for_mode("Dynamic")
        assert (config.budget, config.strategy) == (3, Strategy.WEB)

    def test_none_overrides_are_ignored(self):
        assert RunConfig.for_mode("dynamic", budget=None).budget == 3

    @pytest.mark.parametrize("values", [
        {"mode": "static", "budget": 1},
        {"mode": "static", "strategy": "web"},
        {"mode": "dynamic", "budget": -1},
        {"mode": "dynamic", "max_inflight": 0},
        {"mode": "dynamic", "node_timeout": 0},
        {"mode": "sideways"},
        {"mode": "dynamic", "graft_mode": "splice"},
    ])
    def test_invalid(self, values):
        with pytest.raises(ConfigError):
            RunConfig(**values)

    def test_dict(self):
        config = dynamic(budget=2, graft_mode="replace")
        assert RunConfig.from_dict(config.to_dict()) == config


class TestHappyPath:
    def test_static_plan_runs_to_verdict(self, corpus_index):
        backend = ScriptedBackend.from_jsonl(fixture("static_happy.jsonl"))
        gateway = Gateway(backend)
        result = run_claim(CLAIM, RunConfig.for_mode("static"), Planner(), gateway, WikiRetriever(corpus_index))
        assert result.verdict == Verdict(Label.SUPPORTS, "The corpus names Rolie as a founder of both bands.")
        assert all(n.status is NodeStatus.DONE for n in result.graph.nodes.values())
        assert result.stats.planner_calls == 1
        assert result.stats.gateway_calls == gateway.calls == 5
        assert result.stats.modification_count == 0
        assert result.graph.nodes["j1"].output.startswith("SUPPORTS: ")
        assert validate(result.graph, budget=0).ok

    def test_graft_when_evidence_is_missing(self):
        result = santana_run()
        assert result.verdict.label is Label.SUPPORTS
        assert not result.uncertain
        stats = result.stats
        assert stats.modification_count == 1
        assert stats.planner_calls == 2
        assert stats.gateway_calls == 7
        assert stats.node_increase()["SEARCH"] == (1, 2)
        assert stats.node_increase()["THINK"] == (1, 2)
        assert stats.node_increase()["JUDGE"] == (1, 1)
        graph = result.graph
        assert graph.nodes["t1"].status is NodeStatus.FAILED
        assert graph.nodes["j1"].dependencies == ["m1/t1"]
        assert graph.nodes["m1/s1"].context.source == "t1"
        assert "Journey was formed in 1973" in " ".join(item.content for item in graph.nodes["m1/t1"].evidence)
        assert event_names(result) == [
            "gateway_call", "plan",
            "node_start", "gateway_call", "node_finish",
            "node_start", "gateway_call", "node_finish",
            "gateway_call", "subtree_planned", "graft",
            "node_start", "gateway_call", "node_finish",
            "node_start", "gateway_call", "node_finish",
            "node_start", "gateway_call", "node_finish",
            "verdict",
        ]

    def test_event_log_file(self, tmp_path):
        path = str(tmp_path / "events.jsonl")
        backend = ScriptedBackend.from_jsonl(fixture("santana_journey.jsonl"))
        retriever = WebRetriever(FixtureSearchClient(fixture("search")))
        run_claim(CLAIM, RunConfig.for_mode("dynamic"), Planner(), Gateway(backend), retriever,
                  events=EventLog(path))
        with open(path, encoding="utf-8") as events_file:
            rows = [json.loads(line) for line in events_file]
        assert rows[-1]["event"] == "verdict"
        assert rows[-1]["detail"] == {"label": "SUPPORTS", "forced": False}
        assert all("ts" in row for row in rows)

    def test_refine_substitutes_input(self):
        graph = build_graph("The band Santana was formed in Los Angeles in 1966.", [
            ("s1", "SEARCH", []), ("r1", "REFINE", ["s1"]), ("s2", "SEARCH", ["r1"]), ("j1", "JUDGE", ["s2"])])
        spy = PromptSpy(ScriptedBackend.from_responses({
            Role.SEARCH_QUERY: ["Santana band", "Santana formation city"],
            Role.REFINE: ["Where was Santana formed?"],
            Role.JUDGE: [judge("REFUTES", "formed in San Francisco")],
        }))
        retriever = StaticRetriever(Strategy.WIKI, evidence("Santana formed in San Francisco in 1966."))
        result = run_claim(graph.claim, RunConfig(), StubPlanner(graph), Gateway(spy), retriever)
        assert result.verdict.label is Label.REFUTES
        assert result.graph.nodes["r1"].output == "Where was Santana formed?"
        search_prompts = [prompt for role, prompt in spy.prompts if role is Role.SEARCH_QUERY]
        assert "Task: Where was Santana formed?" in search_prompts[1]

    def test_empty_claim(self):
        with pytest.raises(ValueError):
            run_claim("  ", RunConfig(), Planner(), Gateway(ScriptedBackend()), StaticRetriever(Strategy.WIKI))


class TestBudget:
    @pytest.mark.parametrize("budget", [0, 1, 2, 3])
    def test_perpetually_missing_evidence(self, budget):
        initial = plan_json(node("s1", "SEARCH", "q"), node("t1", "THINK", "x", ["s1"]),
                            node("j1", "JUDGE", CLAIM, ["t1"]))
        sub = plan_json(node("s1", "SEARCH", "q2"), node("t1", "THINK", "x", ["s1"]))
        backend = ScriptedBackend.from_responses({
            Role.PLANNER: [initial] + [sub] * budget,
            Role.SEARCH_QUERY: ["q"] * (budget + 1),
            Role.THINK: [think(missing="who founded Journey")] * (budget + 1),
            Role.JUDGE: [judge("SUPPORTS", "on balance")],
        })
        retriever = StaticRetriever(Strategy.WIKI, evidence("Rolie played keyboards."))
        result = run_claim(CLAIM, dynamic(budget), Planner(), Gateway(backend), retriever)
        assert result.stats.modification_count == budget
        assert len(event_names(result, "graft")) == budget
        assert len(event_names(result, "budget_exhausted")) == 1
        assert result.stats.planner_calls == 1 + budget
        assert result.verdict == Verdict(Label.SUPPORTS, "on balance", forced=True)
        assert result.uncertain
        assert validate(result.graph, budget=budget).ok
        assert result.graph.nodes["j1"].status is NodeStatus.DONE

    def test_static_mode_never_replans(self):
        graph = build_graph(CLAIM, [("s1", "SEARCH", []), ("t1", "THINK", ["s1"]), ("j1", "JUDGE", ["t1"])])
        planner = StubPlanner(graph, [graph])
        gateway = Gateway(ScriptedBackend.from_responses({
            Role.SEARCH_QUERY: ["q"], Role.THINK: [think(missing="x")], Role.JUDGE: [judge("REFUTES")]}))
        result = run_claim(CLAIM, RunConfig(), planner, gateway, StaticRetriever(Strategy.WIKI))
        assert len(planner.requests) == 1
        assert not event_names(result, "subtree_planned")
        assert result.verdict.forced

    def test_forced_rerun_of_terminal(self):
        graph = build_graph(CLAIM, [("s1", "SEARCH", []), ("j1", "JUDGE", ["s1"])])
        gateway = Gateway(ScriptedBackend.from_responses({
            Role.SEARCH_QUERY: ["q"], Role.JUDGE: [judge("UNCERTAIN"), judge("SUPPORTS", "leaning yes")]}))
        result = run_claim(CLAIM, dynamic(0), StubPlanner(graph), gateway, StaticRetriever(Strategy.WIKI))
        assert result.verdict == Verdict(Label.SUPPORTS, "leaning yes", forced=True)
        assert event_names(result, "forced_rerun") == ["forced_rerun"]
        assert not event_names(result, "forced_verdict")
        assert result.graph.nodes["j1"].status is NodeStatus.DONE

    def test_uncertain_terminal_is_grafted(self):
        graph = build_graph(CLAIM, [("s1", "SEARCH", []), ("j1", "JUDGE", ["s1"])])
        sub = build_graph(CLAIM, [("s1", "SEARCH", []), ("j1", "JUDGE", ["s1"])])
        gateway = Gateway(ScriptedBackend.from_responses({
            Role.SEARCH_QUERY: ["q", "q2"], Role.JUDGE: [judge("UNCERTAIN"), judge("SUPPORTS")]}))
        result = run_claim(CLAIM, dynamic(1), StubPlanner(graph, [sub]), gateway, StaticRetriever(Strategy.WIKI))
        assert result.graph.terminal() == "m1/j1"
        assert result.graph.nodes["j1"].status is NodeStatus.FAILED
        assert result.verdict == Verdict(Label.SUPPORTS, "because")

    def test_failed_terminal_gets_standalone_verdict(self):
        graph = build_graph(CLAIM, [("s1", "SEARCH", []), ("j1", "JUDGE", ["s1"])])
        gateway = Gateway(ScriptedBackend.from_responses({
            Role.SEARCH_QUERY: ["q"], Role.JUDGE: ["garbage", "more garbage", judge("REFUTES", "no sign of it")]}))
        result = run_claim(CLAIM, dynamic(1), StubPlanner(graph, [build_graph(CLAIM, [("x", "SEARCH", [])])]),
                           gateway, StaticRetriever(Strategy.WIKI))
        assert result.graph.nodes["j1"].status is NodeStatus.FAILED
        assert event_names(result, "graft_rejected") == ["graft_rejected"] * 2
        assert event_names(result, "forced_verdict") == ["forced_verdict"]
        assert result.verdict == Verdict(Label.REFUTES, "no sign of it", forced=True)


class TestGrafting:
    def test_search_failure_is_replanned(self):
        graph = build_graph(CLAIM, [("s1", "SEARCH", []), ("j1", "JUDGE", ["s1"])])
        sub = build_graph(CLAIM, [("s1", "SEARCH", [])])
        gateway = Gateway(ScriptedBackend.from_responses({
            Role.SEARCH_QUERY: ["q", "q2"], Role.JUDGE: [judge("SUPPORTS")]}))
        retriever = FlakyRetriever(Strategy.WIKI, evidence("Rolie co-founded Journey."))
        result = run_claim(CLAIM, dynamic(1), StubPlanner(graph, [sub]), gateway, retriever)
        assert result.graph.nodes["s1"].status is NodeStatus.FAILED
        assert "503" in result.graph.nodes["s1"].reason
        assert result.graph.nodes["j1"].dependencies == ["m1/s1"]
        assert result.verdict == Verdict(Label.SUPPORTS, "because")

    def test_rejected_twice_then_forced(self):
        graph = build_graph(CLAIM, [("s1", "SEARCH", []), ("t1", "THINK", ["s1"]), ("j1", "JUDGE", ["t1"])])
        wrong_sink = build_graph(CLAIM, [("s1", "SEARCH", []), ("j1", "JUDGE", ["s1"])])
        planner = StubPlanner(graph, [wrong_sink])
        gateway = Gateway(ScriptedBackend.from_responses({
            Role.SEARCH_QUERY: ["q"], Role.THINK: [think(missing="x")], Role.JUDGE: [judge("REFUTES")]}))
        result = run_claim(CLAIM, dynamic(2), planner, gateway, StaticRetriever(Strategy.WIKI))
        assert len(planner.requests) == 3
        assert event_names(result, "graft_rejected") == ["graft_rejected"] * 2
        assert result.stats.modification_count == 0
        assert result.verdict == Verdict(Label.REFUTES, "because", forced=True)

    def test_replace_mode_moves_the_verdict(self):
        graph = build_graph(CLAIM, [("s1", "SEARCH", []), ("t1", "THINK", ["s1"]), ("j1", "JUDGE", ["t1"])])
        sub = build_graph(CLAIM, [("s1", "SEARCH", []), ("j1", "JUDGE", ["s1"])])
        gateway = Gateway(ScriptedBackend.from_responses({
            Role.SEARCH_QUERY: ["q", "q2"], Role.THINK: [think(missing="x")], Role.JUDGE: [judge("REFUTES")]}))
        result = run_claim(CLAIM, dynamic(1, graft_mode=GraftMode.REPLACE), StubPlanner(graph, [sub]), gateway,
                           StaticRetriever(Strategy.WIKI))
        assert result.graph.nodes["t1"].status is NodeStatus.FAILED
        assert result.graph.nodes["j1"].status is NodeStatus.SKIPPED
        assert result.graph.terminal() == "m1/j1"
        assert result.verdict == Verdict(Label.REFUTES, "because")
        assert validate(result.graph, budget=1).ok

    def test_timeout_fails_the_node(self):
        graph = build_graph(CLAIM, [("s1", "SEARCH", []), ("j1", "JUDGE", ["s1"])])
        backend = ScriptedBackend([
            {"role": "SEARCH_QUERY", "response": "slow", "delay": 0.5},
            {"role": "JUDGE", "response": judge("REFUTES")},
        ])
        result = run_claim(CLAIM, dynamic(0, node_timeout=0.05), StubPlanner(graph), Gateway(backend),
                           StaticRetriever(Strategy.WIKI))
        assert event_names(result, "node_timeout") == ["node_timeout"]
        assert result.graph.nodes["s1"].status is NodeStatus.FAILED
        assert result.verdict.forced

    def test_timeout_counts_from_start_not_submit(self):
        graph = build_graph(CLAIM, [("s1", "SEARCH", []), ("s2", "SEARCH", []), ("j1", "JUDGE", ["s1", "s2"])])
        backend = SlowPrompts(ScriptedBackend.from_responses({
            Role.SEARCH_QUERY: ["q"] * 2, Role.JUDGE: [judge("REFUTES")]}), {"Task: s1 input": 0.6})
        result = run_claim(CLAIM, dynamic(0, max_inflight=1, node_timeout=0.2), StubPlanner(graph),
                           Gateway(backend), StaticRetriever(Strategy.WIKI, evidence("fact")))
        timeouts = [event.node_id for event in result.events if event.event == "node_timeout"]
        assert timeouts == ["s1"]
        assert result.graph.nodes["s1"].status is NodeStatus.FAILED
        # the abandoned s1 worker must not hold s2 back past its own deadline
        assert result.graph.nodes["s2"].status is NodeStatus.DONE


def all_dags(max_work_nodes=5):
    """
    Every DAG of up to ``max_work_nodes`` SEARCH/THINK nodes (up to
    isomorphism: edges only point from lower to higher ids), each closed
    by a JUDGE over its sinks. Rows are inserted in shuffled order, so
    dependencies may come after their dependents.
    """
    rng = random.Random(7)
    for count in range(1, max_work_nodes + 1):
        ids = [f"n{i}" for i in range(1, count + 1)]
        pairs = list(itertools.combinations(ids, 2))
        for mask in range(2 ** len(pairs)):
            chosen = [pair for bit, pair in enumerate(pairs) if mask >> bit & 1]
            rows = [(node_id, rng.choice(["SEARCH", "THINK"]), [a for a, b in chosen if b == node_id])
                    for node_id in ids]
            referenced = {a for a, _ in chosen}
            rows.append(("j1", "JUDGE", [node_id for node_id in ids if node_id not in referenced]))
            rng.shuffle(rows)
            yield build_graph(CLAIM, rows)


class SlowPrompts:
    """
    Sleeps before answering any prompt containing one of ``delays``' keys.
    """

    def __init__(self, inner, delays):
        self.inner = inner
        self.delays = delays

    def complete(self, request):
        for marker, delay in self.delays.items():
            if marker in request.prompt:
                time.sleep(delay)
        return self.inner.complete(request)


class TestScheduling:
    def test_nodes_start_after_their_dependencies(self):
        for number, graph in enumerate(all_dags()):
            assert validate(graph).ok
            gateway = Gateway(ScriptedBackend.from_responses({
                Role.SEARCH_QUERY: ["q"] * 6, Role.THINK: [think("ok")] * 6, Role.JUDGE: [judge("SUPPORTS")]}))
            config = RunConfig(max_inflight=number % 4 + 1)
            events = EventLog()
            result = run_claim(CLAIM, config, StubPlanner(graph), gateway,
                               StaticRetriever(Strategy.WIKI, evidence("fact")), events=events)
            position = {}
            for index, event in enumerate(events):
                if event.event in ("node_start", "node_finish"):
                    position[(event.event, event.node_id)] = index
            for node_id, graph_node in result.graph.nodes.items():
                assert graph_node.status is NodeStatus.DONE
                for dep in graph_node.dependencies:
                    assert position[("node_finish", dep)] < position[("node_start", node_id)]
            assert result.verdict.label is Label.SUPPORTS

    def test_independent_branches_run_in_parallel(self):
        graph = build_graph(CLAIM, [("s1", "SEARCH", []), ("t1", "THINK", ["s1"]), ("t2", "THINK", ["s1"]),
                                    ("j1", "JUDGE", ["t1", "t2"])])
        times = []
        for _ in range(10):
            backend = ScriptedBackend([
                {"role": "SEARCH_QUERY", "response": "q"},
                {"role": "THINK", "response": think("a"), "delay": 0.2},
                {"role": "THINK", "response": think("b"), "delay": 0.2},
                {"role": "JUDGE", "response": judge("SUPPORTS")},
            ])
            result = run_claim(CLAIM, RunConfig(), StubPlanner(graph), Gateway(backend),
                               StaticRetriever(Strategy.WIKI))
            times.append(result.stats.wall_time)
        # two sequential THINK calls would take at least 0.4s
        assert max(times) < 0.34

    def test_fast_branch_continues_while_slow_root_runs(self):
        graph = build_graph(CLAIM, [("a", "THINK", []), ("s1", "SEARCH", []), ("t1", "THINK", ["s1"]),
                                    ("j1", "JUDGE", ["a", "t1"])])
        backend = SlowPrompts(ScriptedBackend.from_responses({
            Role.SEARCH_QUERY: ["q"], Role.THINK: [think("ok")] * 2, Role.JUDGE: [judge("SUPPORTS")]}),
            {"about: a input": 0.4, "about: t1 input": 0.3})
        result = run_claim(CLAIM, RunConfig(), StubPlanner(graph), Gateway(backend),
                           StaticRetriever(Strategy.WIKI, evidence("fact")))
        assert result.verdict.label is Label.SUPPORTS
        # t1 has to start as soon as s1 is done, not after a
        assert result.stats.wall_time < 0.6

    def test_result_independent_of_completion_order(self):
        graph = build_graph(CLAIM, [("s1", "SEARCH", []), ("s2", "SEARCH", []), ("t1", "THINK", ["s1", "s2"]),
                                    ("j1", "JUDGE", ["t1"])])
        results = []
        for max_inflight, delays in [(1, {}), (4, {"Task: s1 input": 0.2}), (4, {"Task: s2 input": 0.2})]:
            backend = SlowPrompts(ScriptedBackend.from_responses({
                Role.SEARCH_QUERY: ["q"] * 2, Role.THINK: [think("ok")], Role.JUDGE: [judge("SUPPORTS")]}),
                delays)
            results.append(run_claim(CLAIM, RunConfig(max_inflight=max_inflight), StubPlanner(graph),
                                     Gateway(backend), StaticRetriever(Strategy.WIKI, evidence("fact"))))
        assert results[0].to_json() == results[1].to_json() == results[2].to_json()
        assert [(event.event, event.node_id) for event in results[1].events][1:7] == [
            ("node_start", "s1"), ("gateway_call", "s1"), ("node_finish", "s1"),
            ("node_start", "s2"), ("gateway_call", "s2"), ("node_finish", "s2"),
        ]

    def test_dispatch_respects_capacity(self):
        graph = build_graph(CLAIM, [(f"s{i}", "SEARCH", []) for i in range(1, 6)]
                            + [("j1", "JUDGE", [f"s{i}" for i in range(1, 6)])])
        gateway = Gateway(ScriptedBackend.from_responses({Role.SEARCH_QUERY: ["q"] * 5}))
        executor = Executor(CLAIM, RunConfig(max_inflight=4), StubPlanner(graph), gateway,
                            StaticRetriever(Strategy.WIKI))
        executor.graph = graph
        executor._pool = futures.ThreadPoolExecutor(max_workers=4)
        try:
            assert executor.dispatch_frontier() == ["s1", "s2", "s3", "s4"]
            assert graph.nodes["s5"].status is NodeStatus.PENDING
            assert all(graph.nodes[f"s{i}"].status is NodeStatus.RUNNING for i in range(1, 5))
        finally:
            executor._pool.shutdown(wait=True)


class TestReplay:
    @pytest.mark.parametrize("script,max_inflight", [
        ("santana_journey.jsonl", 1), ("santana_journey.jsonl", 4), ("static_happy.jsonl", 4)])
    def test_transcript_replays_identically(self, tmp_path, corpus_index, script, max_inflight):
        transcript_path = str(tmp_path / "transcript.jsonl")
        recording = RecordingBackend(ScriptedBackend.from_jsonl(fixture(script)), Transcript(transcript_path))
        if script.startswith("static"):
            config, retriever = RunConfig(max_inflight=max_inflight), WikiRetriever(corpus_index)
        else:
            config = RunConfig.for_mode("dynamic", max_inflight=max_inflight)
            retriever = WebRetriever(FixtureSearchClient(fixture("search")))
        first = run_claim(CLAIM, config, Planner(), Gateway(recording), retriever)
        replayed = run_claim(CLAIM, config, Planner(), Gateway(ScriptedBackend.from_jsonl(transcript_path)),
                             retriever)
        assert replayed.to_json() == first.to_json()

    def test_canonical_result_has_no_timing(self):
        data = json.loads(santana_run().to_json())
        assert "wall_time" not in data["stats"]
        assert all("ts" not in event for event in data["events"])

    def test_result_roundtrip(self):
        result = santana_run()
        assert RunResult.from_dict(json.loads(result.to_json())).to_json() == result.to_json()


class TestEngine:
    def test_verify_writes_run_directory(self, tmp_path):
        out_dir = str(tmp_path / "run")
        engine = Engine(RunConfig.for_mode("dynamic"), ScriptedBackend.from_jsonl(fixture("santana_journey.jsonl")),
                        lambda out: WebRetriever(FixtureSearchClient(fixture("search"))),
                        settings={"backend": "scripted"})
        result = engine.verify(CLAIM, out_dir)
        assert result.verdict.label is Label.SUPPORTS
        for name in RUN_FILES:
            assert os.path.isfile(os.path.join(out_dir, name)), name
        with open(os.path.join(out_dir, "result.json"), encoding="utf-8") as result_file:
            assert result_file.read() == result.to_json()
        with open(os.path.join(out_dir, "transcript.jsonl"), encoding="utf-8") as transcript_file:
            assert len(transcript_file.readlines()) == 7
        with open(os.path.join(out_dir, "run.json"), encoding="utf-8") as run_file:
            info = json.load(run_file)
        assert info["config"]["mode"] == "DYNAMIC"
        assert info["settings"] == {"backend": "scripted"}

    def test_without_directory(self):
        engine = Engine(RunConfig.for_mode("dynamic"), ScriptedBackend.from_jsonl(fixture("santana_journey.jsonl")),
                        lambda out: WebRetriever(FixtureSearchClient(fixture("search"))))
        assert engine.verify(CLAIM).stats.modification_count == 1
