import json
import logging
from dataclasses import dataclass, field
from enum import Enum

from . import utils
from .errors import GatewayError, PlannerUnavailable
from .gateway import Role
from .graph import GraphMode, Node, NodeInput, NodeType, ValidationReport, VerificationGraph, validate
from .prompts import default_templates

log = logging.getLogger('vglogger')

MAX_PLAN_NODES = 12
REPAIR_ATTEMPTS = 2


class PlanPurpose(str, Enum):
    INITIAL = "INITIAL"
    SUBTREE = "SUBTREE"


@dataclass(frozen=True)
class FailureContext:
    node_id: str
    node_type: NodeType
    node_input: NodeInput
    reason: str

    def to_dict(self, max_evidence=10):
        return {
            "failed_node": self.node_id,
            "type": self.node_type.value,
            "input": self.node_input.original,
            "reason": self.reason,
            "parent_outputs": [{"id": node_id, "output": text} for node_id, text in self.node_input.parent_outputs],
            "evidence": [item.content for item in list(self.node_input.parent_evidence)[:max_evidence]],
        }


@dataclass(frozen=True)
class PlanRequest:
    claim: str
    purpose: PlanPurpose = PlanPurpose.INITIAL
    failure_context: FailureContext = None
    max_nodes: int = MAX_PLAN_NODES
    allowed_types: tuple = tuple(NodeType)
    sink_type: NodeType = None
    mode: GraphMode = GraphMode.STATIC

    def __post_init__(self):
        object.__setattr__(self, "purpose", PlanPurpose(self.purpose))
        if (self.failure_context is not None) != (self.purpose is PlanPurpose.SUBTREE):
            raise ValueError("failure_context is required for SUBTREE requests and only for them")
        if self.sink_type is None:
            sink = self.failure_context.node_type if self.failure_context is not None else NodeType.JUDGE
            object.__setattr__(self, "sink_type", sink)


class ParseErrorKind(str, Enum):
    NOT_PARSEABLE = "NOT_PARSEABLE"
    SCHEMA_VIOLATION = "SCHEMA_VIOLATION"
    GRAPH_INVALID = "GRAPH_INVALID"


@dataclass(frozen=True)
class PlanParseError:
    kind: ParseErrorKind
    detail: str
    report: ValidationReport = None

    def __str__(self):
        return f"{self.kind.value}: {self.detail}"


@dataclass
class PlanResult:
    graph: VerificationGraph
    attempts: int
    fallback: bool = False
    errors: list = field(default_factory=list)


def _schema_example(request):
    if request.purpose is PlanPurpose.INITIAL:
        nodes = [
            {"id": "s1", "type": "SEARCH", "input": "<first fact to look up>",
             "hint": "<what this evidence is for>", "dependencies": []},
            {"id": "s2", "type": "SEARCH", "input": "<second, independent fact>",
             "hint": "", "dependencies": []},
            {"id": "t1", "type": "THINK", "input": "<intermediate statement to check>",
             "hint": "<how to combine s1 and s2>", "dependencies": ["s1", "s2"]},
            {"id": "j1", "type": "JUDGE", "input": request.claim,
             "hint": "<how the conclusions decide the claim>", "dependencies": ["t1"]},
        ]
    else:
        nodes = [
            {"id": "s1", "type": "SEARCH", "input": "<query for the missing information>",
             "hint": "", "dependencies": []},
            {"id": "x1", "type": request.sink_type.value, "input": request.failure_context.node_input.original,
             "hint": "<how to use the new evidence>", "dependencies": ["s1"]},
        ]
    return json.dumps(nodes, indent=2, ensure_ascii=False)


def build_plan_prompt(request, templates=None):
    if not request.claim.strip():
        raise ValueError("cannot plan an empty claim")
    templates = templates or default_templates()
    values = {"claim": request.claim, "schema": _schema_example(request), "max_nodes": request.max_nodes}
    if request.purpose is PlanPurpose.INITIAL:
        return templates.render("plan_initial", **values)
    values["failure_context"] = json.dumps(request.failure_context.to_dict(), indent=2, ensure_ascii=False)
    values["sink_type"] = request.sink_type.value
    return templates.render("plan_subtree", **values)


def _schema_error(detail):
    return PlanParseError(ParseErrorKind.SCHEMA_VIOLATION, detail)


def parse_plan(raw, claim, mode, max_nodes=MAX_PLAN_NODES, terminal_type=NodeType.JUDGE,
               subgraph=False, allowed_types=tuple(NodeType)):
    """
    Turn model output into a validated graph, or explain why it can't be.
    """
    entries = utils.extract_json(raw, list) if isinstance(raw, str) else None
    if entries is None:
        return PlanParseError(ParseErrorKind.NOT_PARSEABLE, "no JSON array found")
    if not entries:
        return _schema_error("plan has no nodes")
    if len(entries) > max_nodes:
        return _schema_error(f"plan has {len(entries)} nodes, at most {max_nodes} allowed")

    allowed = {NodeType(node_type) for node_type in allowed_types}
    nodes = []
    seen = set()
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict):
            return _schema_error(f"node {index}: not an object")
        node_id = entry.get("id")
        if isinstance(node_id, int) and not isinstance(node_id, bool):
            node_id = str(node_id)
        if not isinstance(node_id, str) or not node_id.strip():
            return _schema_error(f"node {index}: missing `id`")
        node_id = node_id.strip()
        if "/" in node_id:
            return _schema_error(f"node {index}: id `{node_id}` must not contain `/`")
        if node_id in seen:
            return _schema_error(f"node {index}: duplicate id `{node_id}`")
        seen.add(node_id)
        if "type" not in entry:
            return _schema_error(f"node {index}: missing `type`")
        try:
            node_type = NodeType(str(entry["type"]).strip().upper())
        except ValueError:
            return _schema_error(f"node {index}: unknown type `{entry['type']}`")
        if node_type not in allowed:
            return _schema_error(f"node {index}: type {node_type.value} not allowed here")
        node_input = entry.get("input")
        if not isinstance(node_input, str) or not node_input.strip():
            return _schema_error(f"node {index}: missing `input`")
        hint = entry.get("hint") or ""
        if not isinstance(hint, str):
            return _schema_error(f"node {index}: `hint` must be text")
        dependencies = entry.get("dependencies") or []
        if not isinstance(dependencies, list):
            return _schema_error(f"node {index}: `dependencies` must be a list")
        deps = []
        for dep in dependencies:
            if isinstance(dep, int) and not isinstance(dep, bool):
                dep = str(dep)
            if not isinstance(dep, str):
                return _schema_error(f"node {index}: dependency ids must be text")
            deps.append(dep.strip())
        nodes.append(Node(id=node_id, type=node_type, input=node_input, hint=hint, dependencies=deps))

    graph = VerificationGraph(claim, nodes, modification_count=0, mode=mode)
    report = validate(graph, terminal_type=terminal_type, subgraph=subgraph)
    if not report.ok:
        return PlanParseError(ParseErrorKind.GRAPH_INVALID, str(report), report)
    return graph


def fallback_plan(request):
    """
    Minimal plan used when the model never produced a usable one.
    """
    if request.purpose is PlanPurpose.INITIAL:
        nodes = [
            Node(id="s1", type=NodeType.SEARCH, input=request.claim, hint="Find evidence about the claim."),
            Node(id="j1", type=NodeType.JUDGE, input=request.claim,
                 hint="Judge the claim on the retrieved evidence.", dependencies=["s1"]),
        ]
    else:
        failure = request.failure_context
        sink_type = request.sink_type
        sink_id = "s2" if sink_type is NodeType.SEARCH else f"{sink_type.value[0].lower()}1"
        nodes = [
            Node(id="s1", type=NodeType.SEARCH, input=failure.reason or failure.node_input.original,
                 hint="Look for the information that was missing."),
            Node(id=sink_id, type=sink_type, input=failure.node_input.original,
                 hint=failure.node_input.hint, dependencies=["s1"]),
        ]
    return VerificationGraph(request.claim, nodes, modification_count=0, mode=request.mode)


class Planner:
    """
    Prompts the model for a plan and repairs or replaces bad answers.
    Holds no per-request state, so one planner can serve many executors.
    """

    def __init__(self, templates=None, repair_attempts=REPAIR_ATTEMPTS):
        self.templates = templates or default_templates()
        self.repair_attempts = repair_attempts

    def plan(self, request, gateway):
        prompt = build_plan_prompt(request, self.templates)
        subgraph = request.purpose is PlanPurpose.SUBTREE
        errors = []
        current = prompt
        for attempt in range(1, self.repair_attempts + 2):
            try:
                raw = gateway.ask(Role.PLANNER, current)
            except GatewayError as err:
                raise PlannerUnavailable(f"planner could not reach the model: {err}") from err
            parsed = parse_plan(raw, request.claim, request.mode, max_nodes=request.max_nodes,
                                terminal_type=request.sink_type, subgraph=subgraph,
                                allowed_types=request.allowed_types)
            if isinstance(parsed, VerificationGraph):
                log.debug(f"{request.purpose.value} plan accepted after {attempt} call(s).")
                return PlanResult(parsed, attempt, False, errors)
            errors.append(parsed)
            log.warning(f"Plan attempt {attempt} rejected: {parsed}")
            current = prompt + self.templates.render("plan_repair", error=str(parsed))
        log.warning(f"Using the fallback {request.purpose.value.lower()} plan.")
        return PlanResult(fallback_plan(request), self.repair_attempts + 1, True, errors)

    def generate_plan(self, request, gateway):
        return self.plan(request, gateway).graph


def generate_plan(request, gateway, planner=None):
    return (planner or Planner()).generate_plan(request, gateway)
