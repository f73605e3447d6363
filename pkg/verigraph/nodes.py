import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

from . import utils
from .errors import RefinePrecondition
from .evidence import merge_evidence
from .gateway import Role
from .graph import GraphMode
from .prompts import default_templates

log = logging.getLogger('vglogger')

CONTEXT_EVIDENCE_LIMIT = 20

THINK_INSTRUCTIONS = {
    GraphMode.STATIC: "Reason over the evidence and state your conclusion about the statement. "
                      "Only report missing information if the evidence cannot settle it at all.",
    GraphMode.DYNAMIC: "Decide whether the evidence above is sufficient to settle the statement. "
                       "If it is, state the conclusion; if not, say precisely what is missing.",
}

JUDGE_INSTRUCTIONS = {
    False: 'LABEL is "SUPPORTS" if the evidence confirms the statement, "REFUTES" if it does not, '
           'or "UNCERTAIN" if the evidence is not enough to decide.',
    True: 'LABEL must be "SUPPORTS" if the evidence confirms the statement and "REFUTES" otherwise. '
          'You must choose one of these two labels even if the evidence is incomplete.',
}


class Label(str, Enum):
    SUPPORTS = "SUPPORTS"
    REFUTES = "REFUTES"
    UNCERTAIN = "UNCERTAIN"


BINARY_LABELS = (Label.SUPPORTS, Label.REFUTES)

_LABEL_ALIASES = {
    "SUPPORTS": Label.SUPPORTS, "SUPPORTED": Label.SUPPORTS, "SUPPORT": Label.SUPPORTS, "TRUE": Label.SUPPORTS,
    "REFUTES": Label.REFUTES, "REFUTED": Label.REFUTES, "REFUTE": Label.REFUTES, "FALSE": Label.REFUTES,
    "UNCERTAIN": Label.UNCERTAIN, "UNKNOWN": Label.UNCERTAIN, "NOT ENOUGH INFO": Label.UNCERTAIN,
}


@dataclass(frozen=True)
class ThinkOutcome:
    sufficient: bool
    conclusion: str = None
    missing: str = None

    def __post_init__(self):
        if self.sufficient and not self.conclusion:
            raise ValueError("a sufficient outcome needs a conclusion")
        if not self.sufficient and not self.missing:
            raise ValueError("an insufficient outcome must say what is missing")
        if self.conclusion and self.missing:
            raise ValueError("conclusion and missing are mutually exclusive")


@dataclass(frozen=True)
class Verdict:
    label: Label
    explanation: str = ""
    forced: bool = False

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        if self.forced and self.label is Label.UNCERTAIN:
            raise ValueError("a forced verdict cannot be UNCERTAIN")

    def output_text(self):
        return f"{self.label.value}: {self.explanation}"

    def to_dict(self):
        return {"label": self.label.value, "explanation": self.explanation, "forced": self.forced}

    @classmethod
    def from_dict(cls, data):
        return cls(Label(data["label"]), data.get("explanation", ""), bool(data.get("forced", False)))


class SearchOutcome(NamedTuple):
    query: str
    evidence: object
    retrieved: object
    output: str


def format_context(node_input, limit=CONTEXT_EVIDENCE_LIMIT):
    lines = []
    for node_id, text in node_input.parent_outputs:
        lines.append(f"[{node_id}] {text}")
    evidence = list(node_input.parent_evidence)
    for item in evidence[:limit]:
        lines.append(f"(evidence {item.rank}, {item.source}) {item.content}")
    if len(evidence) > limit:
        lines.append(f"... {len(evidence) - limit} more evidence item(s) omitted")
    return "\n".join(lines) if lines else "(nothing yet)"


def _prompt_values(node_input):
    return {"input": node_input.original, "hint": node_input.hint or "(none)", "context": format_context(node_input)}


def _single_line(text):
    for line in text.strip().splitlines():
        line = line.strip().strip('"').strip("'").strip()
        if line:
            return line
    return ""


def exec_search(node_input, strategy, gateway, retriever, k=10, templates=None):
    """
    Generate a query for the node, retrieve top-k evidence and fold it into
    the evidence inherited from the parents.
    """
    if retriever.strategy is not strategy:
        raise ValueError(f"retriever serves {retriever.strategy.value}, node wants {strategy.value}")
    templates = templates or default_templates()
    raw = gateway.ask(Role.SEARCH_QUERY, templates.render("search_query", **_prompt_values(node_input)))
    query = _single_line(raw) or node_input.original
    retrieved = retriever.search(query, k)
    evidence = merge_evidence([retrieved, node_input.parent_evidence])
    if retrieved:
        top = " ".join(retrieved[0].content.split())[:200]
        summary = f"Found {len(retrieved)} result(s); top: {top}"
    else:
        summary = "Found no results."
    log.debug(f"search `{query}` -> {len(retrieved)} item(s)")
    return SearchOutcome(query, evidence, retrieved, f"Query: {query}\n{summary}")


def exec_refine(node_input, gateway, templates=None):
    if not node_input.parent_outputs and not node_input.parent_evidence:
        raise RefinePrecondition("REFINE needs parent context to disambiguate its input")
    templates = templates or default_templates()
    raw = gateway.ask(Role.REFINE, templates.render("refine", **_prompt_values(node_input)))
    return raw.strip() or node_input.original


def _parse_think(raw):
    data = utils.extract_json(raw, dict)
    if data is None:
        return None, "no JSON object found"
    sufficient = data.get("sufficient")
    if isinstance(sufficient, str) and sufficient.strip().lower() in ("true", "false"):
        sufficient = sufficient.strip().lower() == "true"
    if not isinstance(sufficient, bool):
        return None, "`sufficient` must be true or false"
    text = data.get("conclusion" if sufficient else "missing")
    if not isinstance(text, str) or not text.strip():
        return None, "`conclusion` is required when sufficient, `missing` otherwise"
    if sufficient:
        return ThinkOutcome(True, conclusion=text.strip()), None
    return ThinkOutcome(False, missing=text.strip()), None


def exec_think(node_input, gateway, mode=GraphMode.STATIC, templates=None):
    templates = templates or default_templates()
    prompt = templates.render("think", mode_instruction=THINK_INSTRUCTIONS[GraphMode(mode)], **_prompt_values(node_input))
    outcome, problem = _parse_think(gateway.ask(Role.THINK, prompt))
    if outcome is None:
        log.debug(f"think response unusable ({problem}); asking again")
        outcome, problem = _parse_think(gateway.ask(Role.THINK, prompt + templates.render("reask", error=problem)))
    if outcome is None:
        return ThinkOutcome(False, missing="reasoning unparseable")
    return outcome


def _parse_verdict(raw):
    data = utils.extract_json(raw, dict)
    if data is None:
        return None, "no JSON object found"
    label = _LABEL_ALIASES.get(str(data.get("label", "")).strip().upper())
    if label is None:
        return None, "`label` must be SUPPORTS, REFUTES or UNCERTAIN"
    explanation = data.get("explanation")
    return (label, explanation.strip() if isinstance(explanation, str) else ""), None


def exec_judge(node_input, gateway, forced=False, templates=None):
    """
    Ask for a verdict. A forced judgment never comes back UNCERTAIN: it is
    re-asked once and then falls back to REFUTES.
    """
    templates = templates or default_templates()
    prompt = templates.render("judge", label_instruction=JUDGE_INSTRUCTIONS[bool(forced)], **_prompt_values(node_input))
    parsed, problem = _parse_verdict(gateway.ask(Role.JUDGE, prompt))
    if not forced:
        if parsed is None:
            parsed, problem = _parse_verdict(gateway.ask(Role.JUDGE, prompt + templates.render("reask", error=problem)))
        if parsed is None:
            return Verdict(Label.UNCERTAIN, "judgment unparseable")
        return Verdict(parsed[0], parsed[1])

    if parsed is None or parsed[0] is Label.UNCERTAIN:
        problem = problem or "UNCERTAIN is not allowed, choose SUPPORTS or REFUTES"
        parsed, _ = _parse_verdict(gateway.ask(Role.JUDGE, prompt + templates.render("reask", error=problem)))
    if parsed is None or parsed[0] is Label.UNCERTAIN:
        explanation = parsed[1] if parsed is not None and parsed[1] else "no binary verdict after re-asking"
        return Verdict(Label.REFUTES, explanation, forced=True)
    return Verdict(parsed[0], parsed[1], forced=True)
