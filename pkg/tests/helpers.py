import json
import os
import re
import threading

from verigraph.evidence import EvidenceItem, EvidenceSet
from verigraph.gateway import Gateway, Role, ScriptedBackend
from verigraph.graph import Node, NodeType, VerificationGraph
from verigraph.planner import PlanResult

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")


def fixture(*parts):
    return os.path.join(FIXTURES, *parts)


def node(node_id, node_type, text="x", deps=(), hint=""):
    return {"id": node_id, "type": node_type, "input": text, "hint": hint, "dependencies": list(deps)}


def plan_json(*nodes):
    return json.dumps(list(nodes))


def think(conclusion=None, missing=None):
    if missing is not None:
        return json.dumps({"sufficient": False, "missing": missing})
    return json.dumps({"sufficient": True, "conclusion": conclusion or "confirmed"})


def judge(label, explanation="because"):
    return json.dumps({"label": label, "explanation": explanation})


def scripted(responses, max_concurrency=4):
    """
    Gateway over a queue-only script: ``{role name: [response, ...]}``.
    """
    backend = ScriptedBackend.from_responses({Role(role): list(queued) for role, queued in responses.items()})
    return Gateway(backend, max_concurrency=max_concurrency)


def build_graph(claim, rows, mode="STATIC"):
    """
    ``rows`` is a list of (id, type, dependencies) tuples.
    """
    nodes = [Node(id=node_id, type=NodeType(node_type), input=f"{node_id} input", dependencies=list(deps))
             for node_id, node_type, deps in rows]
    return VerificationGraph(claim, nodes, mode=mode)


def evidence(*contents, source="doc"):
    return EvidenceSet(EvidenceItem(f"{source}:{content}", content, 1.0 / i, i)
                       for i, content in enumerate(contents, start=1))


class StaticRetriever:
    """
    Answers every query with the same items and remembers the queries.
    """

    def __init__(self, strategy, items=None, error=None):
        self.strategy = strategy
        self.items = items if items is not None else EvidenceSet()
        self.error = error
        self.queries = []
        self._lock = threading.Lock()

    def search(self, query, k=10):
        with self._lock:
            self.queries.append(query)
        if self.error is not None:
            raise self.error
        return self.items.truncated(k)


class StubPlanner:
    """
    Hands out prepared graphs: ``initial`` first, then ``subtrees`` in
    order (the last one repeats).
    """

    def __init__(self, initial, subtrees=()):
        self.initial = initial
        self.subtrees = list(subtrees)
        self.requests = []

    def plan(self, request, gateway):
        self.requests.append(request)
        if request.failure_context is None:
            return PlanResult(VerificationGraph.from_dict(self.initial.to_dict()), 1)
        sub = self.subtrees.pop(0) if len(self.subtrees) > 1 else self.subtrees[0]
        return PlanResult(VerificationGraph.from_dict(sub.to_dict()), 1)


_CLAIM = re.compile(r"^Claim: (.*)$", re.MULTILINE)
_STATEMENT = re.compile(r"^Statement: (.*)$", re.MULTILINE)


class RuleBackend:
    """
    Answers from the prompt content alone, so claims verified side by side
    cannot steal each other's responses. Every claim gets a two-node plan
    and the JUDGE label comes from ``labels`` (claim -> label).
    """

    def __init__(self, labels, broken=()):
        self.labels = labels
        self.broken = set(broken)

    def complete(self, request):
        if request.role is Role.PLANNER:
            claim = _CLAIM.search(request.prompt).group(1)
            if claim in self.broken:
                raise RuntimeError("backend crashed")
            return plan_json(node("s1", "SEARCH", claim), node("j1", "JUDGE", claim, ["s1"]))
        if request.role is Role.SEARCH_QUERY:
            return "Gregg Rolie Santana Journey"
        statement = _STATEMENT.search(request.prompt).group(1)
        return judge(self.labels.get(statement, "REFUTES"), f"decided {statement}")
