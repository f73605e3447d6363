import copy
import json
import logging
from dataclasses import dataclass, field
from enum import Enum

import networkx as nx

from .errors import BudgetExhausted, GraftRejected, IllegalTransition, NotReady, UnknownNode
from .evidence import EvidenceSet, merge_evidence

log = logging.getLogger('vglogger')


class NodeType(str, Enum):
    SEARCH = "SEARCH"
    REFINE = "REFINE"
    THINK = "THINK"
    JUDGE = "JUDGE"


class NodeStatus(str, Enum):
    PENDING = "PENDING"
    READY = "READY"
    RUNNING = "RUNNING"
    DONE = "DONE"
    FAILED = "FAILED"
    SKIPPED = "SKIPPED"


class GraphMode(str, Enum):
    STATIC = "STATIC"
    DYNAMIC = "DYNAMIC"


class GraftMode(str, Enum):
    REWIRE = "rewire"
    REPLACE = "replace"


_TRANSITIONS = {
    NodeStatus.PENDING: {NodeStatus.READY, NodeStatus.SKIPPED},
    NodeStatus.READY: {NodeStatus.RUNNING},
    NodeStatus.RUNNING: {NodeStatus.DONE, NodeStatus.FAILED},
    # SKIPPED -> PENDING only happens while a graft re-wires descendants
    NodeStatus.SKIPPED: {NodeStatus.PENDING},
    NodeStatus.DONE: set(),
    NodeStatus.FAILED: set(),
}

# FAILED and SKIPPED nodes are inert: they never run again and do not count as sinks
INERT = (NodeStatus.FAILED, NodeStatus.SKIPPED)


@dataclass(frozen=True)
class NodeInput:
    original: str
    parent_outputs: tuple = ()
    parent_evidence: EvidenceSet = field(default_factory=EvidenceSet)
    hint: str = ""

    def to_dict(self):
        return {
            "original": self.original,
            "parent_outputs": [[node_id, text] for node_id, text in self.parent_outputs],
            "parent_evidence": self.parent_evidence.to_list(),
            "hint": self.hint,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            original=data["original"],
            parent_outputs=tuple((str(node_id), text) for node_id, text in data.get("parent_outputs", [])),
            parent_evidence=EvidenceSet.from_list(data.get("parent_evidence")),
            hint=data.get("hint", ""),
        )


@dataclass(frozen=True)
class GraftContext:
    """
    Link from the roots of a grafted subtree back to the node whose failure
    triggered it.
    """
    source: str
    input: NodeInput
    reason: str
    evidence: EvidenceSet = field(default_factory=EvidenceSet)

    def to_dict(self):
        return {
            "source": self.source,
            "reason": self.reason,
            "input": self.input.to_dict(),
            "evidence": self.evidence.to_list(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(source=data["source"], reason=data.get("reason", ""),
                   input=NodeInput.from_dict(data["input"]),
                   evidence=EvidenceSet.from_list(data.get("evidence")))


@dataclass
class Node:
    id: str
    type: NodeType
    input: str
    hint: str = ""
    dependencies: list = field(default_factory=list)
    status: NodeStatus = NodeStatus.PENDING
    output: str = None
    evidence: EvidenceSet = field(default_factory=EvidenceSet)
    context: GraftContext = None
    reason: str = None

    def transition(self, new_status):
        if new_status not in _TRANSITIONS[self.status]:
            raise IllegalTransition(self.id, self.status, new_status)
        log.debug(f"{self.id}: {self.status.value} -> {new_status.value}")
        self.status = new_status

    def to_dict(self):
        return {
            "id": self.id,
            "type": self.type.value,
            "input": self.input,
            "hint": self.hint,
            "dependencies": list(self.dependencies),
            "status": self.status.value,
            "output": self.output,
            "evidence": self.evidence.to_list(),
            "context": self.context.to_dict() if self.context is not None else None,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            id=data["id"],
            type=NodeType(data["type"]),
            input=data["input"],
            hint=data.get("hint", ""),
            dependencies=list(data.get("dependencies", [])),
            status=NodeStatus(data.get("status", NodeStatus.PENDING.value)),
            output=data.get("output"),
            evidence=EvidenceSet.from_list(data.get("evidence")),
            context=GraftContext.from_dict(data["context"]) if data.get("context") else None,
            reason=data.get("reason"),
        )


class VerificationGraph:
    """
    The verification plan of one claim. Edges live only in each node's
    dependency list; every other view (children, sinks, the networkx
    digraph) is derived on demand.
    """

    def __init__(self, claim, nodes=(), modification_count=0, mode=GraphMode.STATIC):
        self.claim = claim
        self.nodes = {}
        self.modification_count = modification_count
        self.mode = GraphMode(mode)
        for node in nodes:
            self.add_node(node)

    def add_node(self, node):
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id `{node.id}`")
        self.nodes[node.id] = node

    def node(self, node_id):
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def __contains__(self, node_id):
        return node_id in self.nodes

    def __len__(self):
        return len(self.nodes)

    def children(self, node_id):
        return [node.id for node in self.nodes.values() if node_id in node.dependencies]

    def sinks(self):
        referenced = {dep for node in self.nodes.values() for dep in node.dependencies}
        return [node_id for node_id in self.nodes if node_id not in referenced]

    def terminal(self):
        """
        The JUDGE sink added last; grafts that replace the verdict append
        a newer one.
        """
        judges = [node_id for node_id in self.sinks() if self.nodes[node_id].type is NodeType.JUDGE]
        return judges[-1] if judges else None

    def to_digraph(self):
        digraph = nx.DiGraph()
        digraph.add_nodes_from(self.nodes)
        for node in self.nodes.values():
            for dep in node.dependencies:
                if dep in self.nodes:
                    digraph.add_edge(dep, node.id)
        return digraph

    def count_by_type(self):
        counts = {node_type.value: 0 for node_type in NodeType}
        for node in self.nodes.values():
            counts[node.type.value] += 1
        return counts

    def to_dict(self):
        return {
            "claim": self.claim,
            "mode": self.mode.value,
            "modification_count": self.modification_count,
            "nodes": [node.to_dict() for node in self.nodes.values()],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            claim=data["claim"],
            nodes=[Node.from_dict(entry) for entry in data.get("nodes", [])],
            modification_count=int(data.get("modification_count", 0)),
            mode=GraphMode(data.get("mode", GraphMode.STATIC.value)),
        )

    def to_json(self):
        return dumps_canonical(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def dumps_canonical(data):
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


@dataclass(frozen=True)
class Violation:
    node_id: str
    message: str

    def __str__(self):
        return self.message


class ValidationReport:
    def __init__(self, violations=()):
        self.violations = list(violations)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok

    def messages(self):
        return [str(violation) for violation in self.violations]

    def __str__(self):
        return "ok" if self.ok else "; ".join(self.messages())

    def __repr__(self):
        return f"ValidationReport({self.messages()!r})"


def validate(graph, terminal_type=NodeType.JUDGE, subgraph=False, budget=None):
    """
    Check every structural rule of a verification graph and report all
    violations found.

    With ``subgraph=True`` the graph is checked as a graft candidate: it
    must have exactly one sink and that sink must have ``terminal_type``.
    Otherwise the graph needs exactly one live JUDGE sink.
    """
    violations = []
    for node in graph.nodes.values():
        if not node.id:
            violations.append(Violation(node.id, "empty node id"))
        for dep in node.dependencies:
            if dep not in graph.nodes:
                violations.append(Violation(node.id, f"unresolved dependency {dep} at {node.id}"))
        if len(set(node.dependencies)) != len(node.dependencies):
            violations.append(Violation(node.id, f"duplicate dependency at {node.id}"))
        has_output = bool(node.output)
        if has_output != (node.status is NodeStatus.DONE):
            violations.append(Violation(node.id, f"output/status mismatch at {node.id} ({node.status.value})"))
        refine_parents = [dep for dep in node.dependencies
                          if dep in graph.nodes and graph.nodes[dep].type is NodeType.REFINE]
        if len(refine_parents) > 1:
            violations.append(Violation(node.id, f"multiple REFINE parents at {node.id}: {', '.join(refine_parents)}"))

    digraph = graph.to_digraph()
    for component in nx.strongly_connected_components(digraph):
        if len(component) > 1 or any(digraph.has_edge(n, n) for n in component):
            members = sorted(component)
            violations.append(Violation(members[0], "cycle {" + ",".join(members) + "}"))

    sinks = graph.sinks()
    if subgraph:
        if len(sinks) != 1:
            violations.append(Violation(None, f"subgraph must have exactly one sink, found {len(sinks)}"))
        elif graph.nodes[sinks[0]].type is not NodeType(terminal_type):
            violations.append(Violation(sinks[0], f"sink {sinks[0]} is {graph.nodes[sinks[0]].type.value}, "
                                                  f"expected {NodeType(terminal_type).value}"))
    else:
        live_judges = [node_id for node_id in sinks
                       if graph.nodes[node_id].type is NodeType.JUDGE
                       and graph.nodes[node_id].status not in INERT]
        if not live_judges:
            violations.append(Violation(None, "no terminal JUDGE"))
        elif len(live_judges) > 1:
            violations.append(Violation(live_judges[1], f"multiple terminal JUDGE nodes: {', '.join(live_judges)}"))

    if graph.modification_count < 0:
        violations.append(Violation(None, "negative modification count"))
    if budget is not None and graph.modification_count > budget:
        violations.append(Violation(None, f"modification count {graph.modification_count} exceeds budget {budget}"))
    return ValidationReport(violations)


def ready_frontier(graph):
    frontier = []
    for node in graph.nodes.values():
        if node.status is not NodeStatus.PENDING:
            continue
        if all(dep in graph.nodes and graph.nodes[dep].status is NodeStatus.DONE
               for dep in node.dependencies):
            frontier.append(node.id)
    return frontier


def descendants(graph, node_id):
    if node_id not in graph.nodes:
        raise UnknownNode(node_id)
    return set(nx.descendants(graph.to_digraph(), node_id))


def ancestors(graph, node_id):
    if node_id not in graph.nodes:
        raise UnknownNode(node_id)
    return set(nx.ancestors(graph.to_digraph(), node_id))


def topological_order(graph):
    """
    Dependencies before dependents, ties broken by insertion order, so the
    order depends on the graph alone.
    """
    position = {node_id: index for index, node_id in enumerate(graph.nodes)}
    return list(nx.lexicographical_topological_sort(graph.to_digraph(), key=position.get))


def assemble_input(graph, node_id):
    """
    Pre-process a node before execution: collect parent outputs and
    evidence in dependency order and apply REFINE substitution.
    """
    node = graph.node(node_id)
    pending = [dep for dep in node.dependencies
               if dep not in graph.nodes or graph.nodes[dep].status is not NodeStatus.DONE]
    if pending:
        raise NotReady(node_id, pending)

    parent_outputs = []
    evidence_sets = []
    if node.context is not None:
        parent_outputs.extend(node.context.input.parent_outputs)
        parent_outputs.append((node.context.source, node.context.reason))
        evidence_sets.append(node.context.input.parent_evidence)
        evidence_sets.append(node.context.evidence)

    original = node.input
    for dep in node.dependencies:
        parent = graph.nodes[dep]
        parent_outputs.append((dep, parent.output))
        evidence_sets.append(parent.evidence)
        if parent.type is NodeType.REFINE:
            original = parent.output

    return NodeInput(
        original=original,
        parent_outputs=tuple(parent_outputs),
        parent_evidence=merge_evidence(evidence_sets),
        hint=node.hint,
    )


def graft(graph, failed, sub, budget, graft_mode=GraftMode.REWIRE):
    """
    Integrate a freshly planned subgraph at a failed node and return the
    new graph; ``graph`` itself is never modified.

    In rewire mode the subgraph's sink takes over every outgoing edge of
    the failed node and skipped descendants become pending again. In
    replace mode the subgraph ends in a JUDGE that becomes the new
    terminal verdict while the old descendants stay skipped.
    """
    graft_mode = GraftMode(graft_mode)
    if graph.modification_count >= budget:
        raise BudgetExhausted(graph.modification_count, budget)
    failed_node = graph.node(failed)
    if failed_node.status is not NodeStatus.FAILED:
        raise GraftRejected(f"node `{failed}` is {failed_node.status.value}, not FAILED")

    required = failed_node.type if graft_mode is GraftMode.REWIRE else NodeType.JUDGE
    report = validate(sub, terminal_type=required, subgraph=True)
    if not report.ok:
        raise GraftRejected(f"subgraph rejected: {report}")

    prefix = f"m{graph.modification_count + 1}/"
    renamed = {node_id: prefix + node_id for node_id in sub.nodes}
    clashes = sorted(set(renamed.values()) & set(graph.nodes))
    if clashes:
        raise GraftRejected(f"namespaced ids already in graph: {', '.join(clashes)}")

    try:
        failed_input = assemble_input(graph, failed)
    except NotReady as err:
        raise GraftRejected(str(err)) from err
    context = GraftContext(source=failed, input=failed_input,
                           reason=failed_node.reason or "", evidence=failed_node.evidence)

    result = copy.deepcopy(graph)
    old_terminal = result.terminal()
    sink = renamed[sub.sinks()[0]]

    if graft_mode is GraftMode.REWIRE:
        for node in result.nodes.values():
            node.dependencies = [sink if dep == failed else dep for dep in node.dependencies]

    for sub_node in sub.nodes.values():
        result.add_node(Node(
            id=renamed[sub_node.id],
            type=sub_node.type,
            input=sub_node.input,
            hint=sub_node.hint,
            dependencies=[renamed[dep] for dep in sub_node.dependencies],
            context=None if sub_node.dependencies else context,
        ))

    if graft_mode is GraftMode.REWIRE:
        for node_id in sorted(descendants(result, sink), key=list(result.nodes).index):
            node = result.nodes[node_id]
            if node.status is not NodeStatus.SKIPPED:
                continue
            blocked = any(result.nodes[a].status is NodeStatus.FAILED for a in ancestors(result, node_id))
            if not blocked:
                node.transition(NodeStatus.PENDING)
    elif old_terminal is not None and old_terminal != failed:
        terminal_node = result.nodes[old_terminal]
        if terminal_node.status is NodeStatus.PENDING:
            terminal_node.transition(NodeStatus.SKIPPED)

    result.modification_count += 1
    report = validate(result, budget=budget)
    if not report.ok:
        raise GraftRejected(f"grafted graph invalid: {report}")
    log.info(f"Grafted {len(sub)} node(s) at `{failed}` as `{prefix}*` "
             f"(modification {result.modification_count}/{budget}).")
    return result
