import logging
import os
import threading
import time
from collections import OrderedDict
from concurrent import futures
from dataclasses import dataclass, field
from datetime import datetime, timezone

from . import utils
from .errors import ConfigError, GatewayError, GraftRejected, RefinePrecondition, SearchFailed
from .evidence import EvidenceSet, merge_evidence
from .gateway import Gateway, RecordingBackend, Transcript
from .graph import (GraftMode, GraphMode, NodeInput, NodeStatus, NodeType, VerificationGraph,
                    assemble_input, descendants, dumps_canonical, graft, ready_frontier,
                    topological_order)
from .nodes import Label, Verdict, exec_judge, exec_refine, exec_search, exec_think
from .planner import MAX_PLAN_NODES, FailureContext, Planner, PlanPurpose, PlanRequest
from .retrieval import Strategy

log = logging.getLogger('vglogger')

# subtree generation is retried once when the graft is rejected
GRAFT_ATTEMPTS = 2

# how often the coordinator looks for a queued node to start its clock
QUEUE_POLL = 0.05


def _member(kind, value):
    if isinstance(value, kind):
        return value
    for member in kind:
        if str(value).strip().lower() == member.value.lower():
            return member
    choices = ", ".join(member.value.lower() for member in kind)
    raise ConfigError(f"invalid {kind.__name__} `{value}` (choose from {choices})")


@dataclass
class RunConfig:
    mode: GraphMode = GraphMode.STATIC
    budget: int = 0
    max_inflight: int = 4
    node_timeout: float = 60.0
    strategy: Strategy = Strategy.WIKI
    graft_mode: GraftMode = GraftMode.REWIRE
    top_k: int = 10
    max_plan_nodes: int = MAX_PLAN_NODES

    def __post_init__(self):
        self.mode = _member(GraphMode, self.mode)
        self.strategy = _member(Strategy, self.strategy)
        self.graft_mode = _member(GraftMode, self.graft_mode)
        if self.mode is GraphMode.STATIC:
            if self.budget != 0:
                raise ConfigError(f"static mode runs without modifications, budget must be 0 (got {self.budget})")
            if self.strategy is not Strategy.WIKI:
                raise ConfigError("static mode retrieves from the local corpus only (strategy WIKI)")
        if self.budget < 0:
            raise ConfigError(f"budget must not be negative (got {self.budget})")
        if self.max_inflight < 1:
            raise ConfigError(f"max_inflight must be at least 1 (got {self.max_inflight})")
        if self.node_timeout <= 0:
            raise ConfigError(f"node_timeout must be positive (got {self.node_timeout})")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be at least 1 (got {self.top_k})")
        if self.max_plan_nodes < 2:
            raise ConfigError(f"max_plan_nodes must be at least 2 (got {self.max_plan_nodes})")

    @classmethod
    def for_mode(cls, mode, **overrides):
        """
        Build a config with the defaults of ``mode``: static runs once over
        the local corpus, dynamic may graft up to three times over the web.
        """
        mode = _member(GraphMode, mode)
        if mode is GraphMode.STATIC:
            values = {"budget": 0, "strategy": Strategy.WIKI}
        else:
            values = {"budget": 3, "strategy": Strategy.WEB}
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(mode=mode, **values)

    def to_dict(self):
        return {
            "mode": self.mode.value,
            "budget": self.budget,
            "max_inflight": self.max_inflight,
            "node_timeout": self.node_timeout,
            "strategy": self.strategy.value,
            "graft_mode": self.graft_mode.value,
            "top_k": self.top_k,
            "max_plan_nodes": self.max_plan_nodes,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class Event:
    event: str
    node_id: str = None
    detail: dict = field(default_factory=dict)
    ts: str = None
    # (phase, rank, sequence): the position of the event in result.json
    order: tuple = field(default=None, compare=False)

    def to_dict(self, timing=True):
        data = {"event": self.event, "node_id": self.node_id, "detail": self.detail}
        if timing:
            data = {"ts": self.ts, **data}
        return data


class EventLog:
    """
    Ordered executor events. With a path, every event is also appended to
    a JSON-lines file as it happens.
    """

    def __init__(self, path=None):
        self.path = path
        self.events = []

    def emit(self, event, node_id=None, detail=None, order=None):
        entry = Event(event, node_id, detail or {}, datetime.now(timezone.utc).isoformat(), order)
        self.events.append(entry)
        if self.path is not None:
            utils.append_jsonl(self.path, entry.to_dict())
        return entry

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)


@dataclass
class RunStats:
    initial_counts: dict
    final_counts: dict
    modification_count: int
    planner_calls: int = 0
    gateway_calls: int = 0
    wall_time: float = 0.0
    node_latency: dict = field(default_factory=dict)

    def node_increase(self):
        return {node_type: (self.initial_counts.get(node_type, 0), self.final_counts.get(node_type, 0))
                for node_type in self.final_counts}

    def to_dict(self, timing=True):
        data = {
            "initial_counts": dict(self.initial_counts),
            "final_counts": dict(self.final_counts),
            "modification_count": self.modification_count,
            "planner_calls": self.planner_calls,
            "gateway_calls": self.gateway_calls,
        }
        if timing:
            data["wall_time"] = self.wall_time
            data["node_latency"] = dict(self.node_latency)
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(
            initial_counts=dict(data["initial_counts"]),
            final_counts=dict(data["final_counts"]),
            modification_count=int(data["modification_count"]),
            planner_calls=int(data.get("planner_calls", 0)),
            gateway_calls=int(data.get("gateway_calls", 0)),
            wall_time=float(data.get("wall_time", 0.0)),
            node_latency=dict(data.get("node_latency", {})),
        )


@dataclass
class RunResult:
    claim: str
    verdict: Verdict
    graph: VerificationGraph
    stats: RunStats
    events: list = field(default_factory=list)

    @property
    def uncertain(self):
        return self.verdict.forced

    def to_dict(self, timing=False):
        return {
            "claim": self.claim,
            "verdict": self.verdict.to_dict(),
            "stats": self.stats.to_dict(timing=timing),
            "events": [event.to_dict(timing=timing) for event in self.events],
            "graph": self.graph.to_dict(),
        }

    def to_json(self):
        """
        Canonical JSON: no timestamps or latencies, so replays compare
        byte for byte.
        """
        return dumps_canonical(self.to_dict(timing=False))

    @classmethod
    def from_dict(cls, data):
        return cls(
            claim=data["claim"],
            verdict=Verdict.from_dict(data["verdict"]),
            graph=VerificationGraph.from_dict(data["graph"]),
            stats=RunStats.from_dict(data["stats"]),
            events=[Event(entry["event"], entry.get("node_id"), entry.get("detail") or {}, entry.get("ts"))
                    for entry in data.get("events", [])],
        )


@dataclass
class NodeOutcome:
    ok: bool
    output: str = None
    evidence: EvidenceSet = field(default_factory=EvidenceSet)
    reason: str = None
    verdict: Verdict = None
    forced_rerun: bool = False
    calls: list = field(default_factory=list)
    latency: float = 0.0


class Executor:
    """
    Runs one claim. The coordinator (the thread calling ``run``) is the
    only one touching the graph; workers get an assembled NodeInput and
    hand back a NodeOutcome.

    A node's timeout counts from the moment its worker picks it up. The
    coordinator wakes on the first completion (or the nearest deadline) and
    settles every finished node in dispatch order. Failures are handled
    only once nothing is running.

    ``events`` keeps real-time order. The events of the result are sorted
    by phase, then by the node's topological rank, then by emission, so
    for a given set of model responses result.json never depends on
    thread timing.
    """

    def __init__(self, claim, config, planner, gateway, retriever, events=None, templates=None):
        self.claim = claim
        self.config = config
        self.planner = planner or Planner(templates)
        self.gateway = gateway
        self.retriever = retriever
        self.events = events if events is not None else EventLog()
        self.templates = templates
        self.graph = None
        self.verdicts = {}
        self.latency = {}
        self.failures = []
        self.inflight = OrderedDict()
        self.forced_verdict = None
        self.planner_calls = 0
        self.gateway_calls = 0
        self._pool = None
        self._retired = []
        self._started = {}
        self._started_lock = threading.Lock()
        self._phase = 0
        self._rank = {}
        self._sequence = 0

    def _emit(self, event, node_id=None, detail=None):
        order = (self._phase, self._rank.get(node_id, -1), self._sequence)
        self._sequence += 1
        return self.events.emit(event, node_id, detail, order=order)

    def _begin_phase(self, executing):
        """
        Events of one execution phase are ranked by node; planning and
        failure handling keep emission order.
        """
        self._phase += 1
        self._rank = ({node_id: rank for rank, node_id in enumerate(topological_order(self.graph))}
                      if executing else {})

    def _open_pool(self):
        return futures.ThreadPoolExecutor(max_workers=self.config.max_inflight,
                                          thread_name_prefix="verigraph-node")

    def _retire_pool(self):
        # an abandoned worker keeps its thread, new nodes go to a fresh pool
        self._pool.shutdown(wait=False)
        self._retired.append(self._pool)
        self._pool = self._open_pool()

    # planning

    def _plan(self, request):
        scoped = self.gateway.scoped()
        try:
            result = self.planner.plan(request, scoped)
        finally:
            self.planner_calls += len(scoped.records)
            self.gateway_calls += len(scoped.records)
            for record in scoped.records:
                self._emit("gateway_call", None, {**record, "purpose": request.purpose.value})
        return result

    def _initial_plan(self):
        request = PlanRequest(self.claim, PlanPurpose.INITIAL, max_nodes=self.config.max_plan_nodes,
                              mode=self.config.mode)
        plan = self._plan(request)
        self._emit("plan", None, {"nodes": list(plan.graph.nodes), "attempts": plan.attempts,
                                  "fallback": plan.fallback})
        log.info(f"Initial plan: {len(plan.graph)} node(s){' (fallback)' if plan.fallback else ''}.")
        return plan.graph

    # node execution, on worker threads

    def _execute(self, node_id, node_type, node_input, force_on_uncertain):
        started = time.monotonic()
        with self._started_lock:
            self._started[node_id] = started
        scoped = self.gateway.scoped()
        try:
            outcome = self._dispatch_type(node_type, node_input, force_on_uncertain, scoped)
        except (GatewayError, SearchFailed, RefinePrecondition) as err:
            outcome = NodeOutcome(False, evidence=node_input.parent_evidence, reason=str(err))
        outcome.calls = list(scoped.records)
        outcome.latency = round(time.monotonic() - started, 6)
        return outcome

    def _dispatch_type(self, node_type, node_input, force_on_uncertain, gateway):
        if node_type is NodeType.SEARCH:
            found = exec_search(node_input, self.config.strategy, gateway, self.retriever,
                                k=self.config.top_k, templates=self.templates)
            return NodeOutcome(True, output=found.output, evidence=found.evidence)
        if node_type is NodeType.REFINE:
            refined = exec_refine(node_input, gateway, templates=self.templates)
            return NodeOutcome(True, output=refined, evidence=node_input.parent_evidence)
        if node_type is NodeType.THINK:
            thought = exec_think(node_input, gateway, mode=self.config.mode, templates=self.templates)
            if thought.sufficient:
                return NodeOutcome(True, output=thought.conclusion, evidence=node_input.parent_evidence)
            return NodeOutcome(False, evidence=node_input.parent_evidence, reason=thought.missing)

        verdict = exec_judge(node_input, gateway, forced=False, templates=self.templates)
        rerun = False
        if verdict.label is Label.UNCERTAIN and force_on_uncertain:
            verdict = exec_judge(node_input, gateway, forced=True, templates=self.templates)
            rerun = True
        if verdict.label is Label.UNCERTAIN:
            return NodeOutcome(False, evidence=node_input.parent_evidence,
                               reason=verdict.explanation or "verdict uncertain", verdict=verdict)
        return NodeOutcome(True, output=verdict.output_text(), evidence=node_input.parent_evidence,
                           verdict=verdict, forced_rerun=rerun)

    # coordinator

    def dispatch_frontier(self):
        """
        Start ready nodes in graph order while worker slots are free and
        return the ids started.
        """
        started = []
        terminal = self.graph.terminal()
        budget_spent = self.graph.modification_count >= self.config.budget
        for node_id in ready_frontier(self.graph):
            if len(self.inflight) >= self.config.max_inflight:
                break
            node = self.graph.nodes[node_id]
            node_input = assemble_input(self.graph, node_id)
            node.transition(NodeStatus.READY)
            node.transition(NodeStatus.RUNNING)
            force = node.type is NodeType.JUDGE and node_id == terminal and budget_spent
            self.inflight[node_id] = self._pool.submit(self._execute, node_id, node.type, node_input, force)
            self._emit("node_start", node_id, {"type": node.type.value})
            started.append(node_id)
        return started

    def _wait_timeout(self):
        """
        Seconds until the nearest deadline of a started node. Nodes still
        queued have no deadline yet, so with none started look again soon.
        """
        with self._started_lock:
            starts = [self._started[node_id] for node_id in self.inflight if node_id in self._started]
        if not starts:
            return min(QUEUE_POLL, self.config.node_timeout)
        return max(0.0, min(starts) + self.config.node_timeout - time.monotonic())

    def _overdue(self, node_id, now):
        with self._started_lock:
            started = self._started.get(node_id)
        return started is not None and now - started >= self.config.node_timeout

    def collect_finished(self):
        """
        Wait for the first in-flight node to finish or overrun, then settle
        every finished or overdue node in dispatch order. Returns the ids
        settled.
        """
        futures.wait(list(self.inflight.values()), timeout=self._wait_timeout(),
                     return_when=futures.FIRST_COMPLETED)
        now = time.monotonic()
        settled = []
        for node_id, future in list(self.inflight.items()):
            if future.done():
                del self.inflight[node_id]
                self._settle(node_id, future.result())
            elif self._overdue(node_id, now):
                del self.inflight[node_id]
                self._abandon(node_id, future)
            else:
                continue
            settled.append(node_id)
        return settled

    def _abandon(self, node_id, future):
        future.cancel()
        self._retire_pool()
        self.latency[node_id] = self.config.node_timeout
        self._emit("node_timeout", node_id, {"timeout": self.config.node_timeout})
        log.warning(f"Node `{node_id}` timed out after {self.config.node_timeout}s.")
        self._fail(node_id, f"timed out after {self.config.node_timeout}s", None)

    def _settle(self, node_id, outcome):
        self.latency[node_id] = outcome.latency
        self.gateway_calls += len(outcome.calls)
        for record in outcome.calls:
            self._emit("gateway_call", node_id, record)
        if outcome.forced_rerun:
            self._emit("forced_rerun", node_id, {"label": outcome.verdict.label.value})
        if not outcome.ok:
            self._fail(node_id, outcome.reason, outcome.evidence)
            return
        node = self.graph.nodes[node_id]
        node.output = outcome.output
        node.evidence = outcome.evidence
        node.transition(NodeStatus.DONE)
        if outcome.verdict is not None:
            self.verdicts[node_id] = outcome.verdict
        self._emit("node_finish", node_id, {"status": NodeStatus.DONE.value})
        log.debug(f"{node_id} done: {outcome.output[:80]!r}")

    def _fail(self, node_id, reason, evidence):
        node = self.graph.nodes[node_id]
        node.transition(NodeStatus.FAILED)
        node.reason = reason
        if evidence is not None:
            node.evidence = evidence
        terminal = self.graph.terminal()
        below = descendants(self.graph, node_id)
        # every blocked descendant is listed, whichever failure skipped it first
        skipped = []
        for other in self.graph.nodes:
            if other == terminal or other not in below:
                continue
            status = self.graph.nodes[other].status
            if status is NodeStatus.PENDING:
                self.graph.nodes[other].transition(NodeStatus.SKIPPED)
            if status in (NodeStatus.PENDING, NodeStatus.SKIPPED):
                skipped.append(other)
        self._emit("node_finish", node_id, {"status": NodeStatus.FAILED.value, "reason": reason,
                                            "skipped": skipped})
        log.info(f"Node `{node_id}` failed: {reason}")
        self.failures.append(node_id)

    def handle_failure(self, node_id):
        """
        Graft a freshly planned subtree at a failed node while budget
        remains. Without budget, or after two rejected subtrees, the node
        stays failed and the terminal JUDGE is forced later.
        """
        node = self.graph.node(node_id)
        budget = self.config.budget
        if self.graph.modification_count >= budget:
            self._emit("budget_exhausted", node_id, {"modification_count": self.graph.modification_count,
                                                    "budget": budget})
            log.info(f"No modification budget left for `{node_id}` ({budget} used).")
            return self.graph

        graft_mode = self.config.graft_mode
        failure = FailureContext(node_id, node.type, assemble_input(self.graph, node_id), node.reason or "")
        request = PlanRequest(self.claim, PlanPurpose.SUBTREE, failure_context=failure,
                              max_nodes=self.config.max_plan_nodes, mode=self.config.mode,
                              sink_type=node.type if graft_mode is GraftMode.REWIRE else NodeType.JUDGE)
        for attempt in range(1, GRAFT_ATTEMPTS + 1):
            plan = self._plan(request)
            self._emit("subtree_planned", node_id, {"nodes": list(plan.graph.nodes), "attempt": attempt,
                                                   "fallback": plan.fallback})
            try:
                grafted = graft(self.graph, node_id, plan.graph, budget, graft_mode)
            except GraftRejected as err:
                self._emit("graft_rejected", node_id, {"reason": str(err), "attempt": attempt})
                log.warning(f"Subtree for `{node_id}` rejected (attempt {attempt}): {err}")
                continue
            added = [new_id for new_id in grafted.nodes if new_id not in self.graph.nodes]
            self.graph = grafted
            self._emit("graft", node_id, {"modification_count": grafted.modification_count,
                                         "added": added, "mode": graft_mode.value})
            return self.graph
        return self.graph

    def _global_input(self, terminal_id):
        """
        Everything gathered so far, for a JUDGE that has to decide anyway.
        """
        done = [node for node in self.graph.nodes.values() if node.status is NodeStatus.DONE]
        evidence = merge_evidence([node.evidence for node in self.graph.nodes.values()])
        terminal = self.graph.nodes.get(terminal_id)
        return NodeInput(
            original=terminal.input if terminal is not None else self.claim,
            parent_outputs=tuple((node.id, node.output) for node in done),
            parent_evidence=evidence,
            hint=terminal.hint if terminal is not None else "",
        )

    def _forced_judgment(self, node_id, node_input):
        scoped = self.gateway.scoped()
        try:
            verdict = exec_judge(node_input, scoped, forced=True, templates=self.templates)
        except GatewayError as err:
            log.error(f"Forced judgment failed: {err}")
            verdict = Verdict(Label.REFUTES, f"no verdict obtained: {err}", forced=True)
        self.gateway_calls += len(scoped.records)
        for record in scoped.records:
            self._emit("gateway_call", node_id, record)
        return verdict

    def _force_terminal(self, terminal_id):
        node_input = self._global_input(terminal_id)
        terminal = self.graph.nodes.get(terminal_id)
        if terminal is not None and terminal.status is NodeStatus.PENDING:
            terminal.transition(NodeStatus.READY)
            terminal.transition(NodeStatus.RUNNING)
            self._emit("node_start", terminal_id, {"type": terminal.type.value, "forced": True})
            started = time.monotonic()
            verdict = self._forced_judgment(terminal_id, node_input)
            self.latency[terminal_id] = round(time.monotonic() - started, 6)
            terminal.output = verdict.output_text()
            terminal.evidence = node_input.parent_evidence
            terminal.transition(NodeStatus.DONE)
            self.verdicts[terminal_id] = verdict
            self._emit("node_finish", terminal_id, {"status": NodeStatus.DONE.value, "forced": True})
        else:
            verdict = self._forced_judgment(terminal_id, node_input)
            self.forced_verdict = verdict
            self._emit("forced_verdict", terminal_id, {"label": verdict.label.value})
        log.info(f"Forced verdict {verdict.label.value} after {self.graph.modification_count} modification(s).")
        return verdict

    def run(self):
        if not self.claim or not self.claim.strip():
            raise ValueError("cannot verify an empty claim")
        started = time.monotonic()
        self.graph = self._initial_plan()
        initial_counts = self.graph.count_by_type()
        self._pool = self._open_pool()
        self._begin_phase(executing=True)
        try:
            while True:
                self.dispatch_frontier()
                if self.inflight:
                    self.collect_finished()
                    continue
                self._begin_phase(executing=False)
                if self.failures:
                    # quiescent: the only point where the graph may be modified
                    order = list(self.graph.nodes)
                    pending, self.failures = sorted(self.failures, key=order.index), []
                    for node_id in pending:
                        self.handle_failure(node_id)
                    self._begin_phase(executing=True)
                    continue
                terminal = self.graph.terminal()
                if terminal is not None and self.graph.nodes[terminal].status is NodeStatus.DONE:
                    verdict = self.verdicts[terminal]
                else:
                    verdict = self._force_terminal(terminal)
                break
        finally:
            for pool in [*self._retired, self._pool]:
                pool.shutdown(wait=False, cancel_futures=True)

        if self.forced_verdict is not None:
            verdict = self.forced_verdict
        self._emit("verdict", self.graph.terminal(), {"label": verdict.label.value, "forced": verdict.forced})
        log.info(f"Verdict: {verdict.label.value}{' (forced)' if verdict.forced else ''}.")
        stats = RunStats(
            initial_counts=initial_counts,
            final_counts=self.graph.count_by_type(),
            modification_count=self.graph.modification_count,
            planner_calls=self.planner_calls,
            gateway_calls=self.gateway_calls,
            wall_time=round(time.monotonic() - started, 6),
            node_latency=dict(self.latency),
        )
        return RunResult(self.claim, verdict, self.graph, stats, sorted(self.events, key=lambda entry: entry.order))


def run_claim(claim, config, planner, gateway, retriever, events=None, templates=None):
    return Executor(claim, config, planner, gateway, retriever, events=events, templates=templates).run()


RUN_FILES = ("graph.json", "transcript.jsonl", "events.jsonl", "result.json", "timing.json", "run.json")


def save_run(result, out_dir, run_info):
    utils.ensure_directory(out_dir)
    with open(os.path.join(out_dir, "graph.json"), "w", encoding="utf-8") as graph_file:
        graph_file.write(result.graph.to_json())
    with open(os.path.join(out_dir, "result.json"), "w", encoding="utf-8") as result_file:
        result_file.write(result.to_json())
    utils.write_json(os.path.join(out_dir, "timing.json"),
                     {"wall_time": result.stats.wall_time, "node_latency": result.stats.node_latency})
    utils.write_json(os.path.join(out_dir, "run.json"), run_info)


class Engine:
    """
    Everything needed to verify claims one after another or side by side:
    each ``verify`` call gets its own gateway, transcript, event log and
    executor, sharing only the backend, planner and retrieval factory.
    """

    def __init__(self, config, backend, retriever_factory, planner=None, templates=None, settings=None):
        self.config = config
        self.backend = backend
        self.retriever_factory = retriever_factory
        self.templates = templates
        self.planner = planner or Planner(templates)
        self.settings = dict(settings or {})

    def run_info(self, claim):
        return {"claim": claim, "config": self.config.to_dict(), "settings": self.settings}

    def verify(self, claim, out_dir=None):
        transcript_path = events_path = None
        if out_dir is not None:
            utils.ensure_directory(out_dir)
            transcript_path = os.path.join(out_dir, "transcript.jsonl")
            events_path = os.path.join(out_dir, "events.jsonl")
            for path in (transcript_path, events_path):
                if os.path.exists(path):
                    os.remove(path)
        transcript = Transcript(path=transcript_path)
        gateway = Gateway(RecordingBackend(self.backend, transcript), max_concurrency=self.config.max_inflight)
        retriever = self.retriever_factory(out_dir)
        result = run_claim(claim, self.config, self.planner, gateway, retriever,
                           events=EventLog(events_path), templates=self.templates)
        if out_dir is not None:
            save_run(result, out_dir, self.run_info(claim))
            log.info(f"Run artifacts written to `{out_dir}`.")
        return result
