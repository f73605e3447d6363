import json
import logging
import os
import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

from sklearn.metrics import f1_score

from . import utils
from .errors import DatasetError
from .nodes import BINARY_LABELS, Label

log = logging.getLogger('vglogger')

HARD_SUBSET_SIZE = 150


class DatasetFormat(str, Enum):
    HOVER = "hover"
    FEVEROUS = "feverous"
    CUSTOM = "custom"


# dataset field -> record field; None means the format has no such field
FIELD_MAPS = {
    DatasetFormat.HOVER: {"id": "uid", "claim": "claim", "label": "label", "hops": "num_hops"},
    DatasetFormat.FEVEROUS: {"id": "id", "claim": "claim", "label": "label", "hops": None},
    DatasetFormat.CUSTOM: {"id": "id", "claim": "claim", "label": "label", "hops": "hops"},
}

_GOLD_LABELS = {
    "SUPPORTS": Label.SUPPORTS,
    "SUPPORTED": Label.SUPPORTS,
    "REFUTES": Label.REFUTES,
    "REFUTED": Label.REFUTES,
    "NOT_SUPPORTED": Label.REFUTES,
    "NOT SUPPORTED": Label.REFUTES,
}


def normalize_label(raw):
    """
    Map a dataset label onto SUPPORTS/REFUTES, or None if it is neither.
    """
    if isinstance(raw, Label):
        return raw if raw in BINARY_LABELS else None
    return _GOLD_LABELS.get(str(raw).strip().upper())


@dataclass(frozen=True)
class ClaimRecord:
    id: str
    claim: str
    gold: Label
    hops: int = None
    dataset: DatasetFormat = DatasetFormat.CUSTOM

    def __post_init__(self):
        if Label(self.gold) not in BINARY_LABELS:
            raise ValueError(f"gold label of `{self.id}` must be SUPPORTS or REFUTES")
        object.__setattr__(self, "gold", Label(self.gold))


@dataclass(frozen=True)
class RejectedRecord:
    line: int
    id: str
    label: str
    reason: str


def load_dataset(path, format, rejected=None):
    try:
        dataset = DatasetFormat(str(format).strip().lower())
    except ValueError:
        raise DatasetError(f"unknown dataset format `{format}` "
                           f"(choose from {', '.join(f.value for f in DatasetFormat)})") from None
    fields = FIELD_MAPS[dataset]
    records = []
    with open(path, "r", encoding="utf-8") as dataset_file:
        for line_number, line in enumerate(dataset_file, start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"malformed JSON ({err.msg})", line=line_number) from err
            if not isinstance(entry, dict):
                raise DatasetError("expected a JSON object", line=line_number)
            missing = [fields[key] for key in ("id", "claim", "label") if fields[key] not in entry]
            if missing:
                raise DatasetError(f"missing field(s) {', '.join(missing)}", line=line_number)
            record_id = str(entry[fields["id"]])
            gold = normalize_label(entry[fields["label"]])
            if gold is None:
                reason = f"label `{entry[fields['label']]}` is not SUPPORTS or REFUTES"
                log.warning(f"{path}: line {line_number}: skipping `{record_id}`: {reason}")
                if rejected is not None:
                    rejected.append(RejectedRecord(line_number, record_id, str(entry[fields["label"]]), reason))
                continue
            hops = None
            if fields["hops"] is not None and entry.get(fields["hops"]) is not None:
                try:
                    hops = int(entry[fields["hops"]])
                except (TypeError, ValueError):
                    raise DatasetError(f"`{fields['hops']}` must be an integer", line=line_number) from None
            records.append(ClaimRecord(record_id, str(entry[fields["claim"]]), gold, hops, dataset))
    log.info(f"Loaded {len(records)} claim(s) from `{path}`.")
    return records


def macro_f1(preds, golds):
    """
    Unweighted mean of the SUPPORTS and REFUTES F1 scores. A class with no
    true positives, false positives or false negatives scores 0.
    """
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions for {len(golds)} gold labels")
    if not golds:
        raise ValueError("macro-F1 of an empty set is undefined")
    preds = [Label(label) for label in preds]
    golds = [Label(label) for label in golds]
    if any(label not in BINARY_LABELS for label in preds + golds):
        raise ValueError("macro-F1 is defined over SUPPORTS and REFUTES only")
    labels = [label.value for label in BINARY_LABELS]
    return float(f1_score([label.value for label in golds], [label.value for label in preds], labels=labels,
                          average="macro", zero_division=0))


@dataclass
class ClaimOutcome:
    id: str
    claim: str
    gold: Label
    hops: int = None
    prediction: Label = None
    forced: bool = False
    modification_count: int = 0
    initial_counts: dict = field(default_factory=dict)
    final_counts: dict = field(default_factory=dict)
    wall_time: float = 0.0
    type_latency: dict = field(default_factory=dict)
    error: str = None

    @property
    def completed(self):
        return self.error is None and self.prediction is not None

    @property
    def correct(self):
        return self.completed and self.prediction is self.gold

    def record(self):
        return ClaimRecord(self.id, self.claim, self.gold, self.hops)

    def to_dict(self):
        return {
            "id": self.id,
            "claim": self.claim,
            "gold": self.gold.value,
            "hops": self.hops,
            "prediction": self.prediction.value if self.prediction is not None else None,
            "correct": self.correct,
            "forced": self.forced,
            "modification_count": self.modification_count,
            "initial_counts": self.initial_counts,
            "final_counts": self.final_counts,
            "wall_time": self.wall_time,
            "type_latency": self.type_latency,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            id=str(data["id"]),
            claim=data.get("claim", ""),
            gold=Label(data["gold"]),
            hops=data.get("hops"),
            prediction=Label(data["prediction"]) if data.get("prediction") else None,
            forced=bool(data.get("forced", False)),
            modification_count=int(data.get("modification_count", 0)),
            initial_counts=dict(data.get("initial_counts") or {}),
            final_counts=dict(data.get("final_counts") or {}),
            wall_time=float(data.get("wall_time") or 0.0),
            type_latency=dict(data.get("type_latency") or {}),
            error=data.get("error"),
        )


def outcome_from_result(record, result):
    latencies = {}
    for node_id, latency in result.stats.node_latency.items():
        if node_id in result.graph:
            latencies.setdefault(result.graph.node(node_id).type.value, []).append(latency)
    return ClaimOutcome(
        id=record.id,
        claim=record.claim,
        gold=record.gold,
        hops=record.hops,
        prediction=result.verdict.label,
        forced=result.verdict.forced,
        modification_count=result.stats.modification_count,
        initial_counts=dict(result.stats.initial_counts),
        final_counts=dict(result.stats.final_counts),
        wall_time=result.stats.wall_time,
        type_latency=latencies,
    )


@dataclass
class EvalReport:
    dataset: str
    total: int
    completed: int
    failures: list
    macro_f1: float
    per_hop_f1: dict
    uncertain_count: int
    avg_initial_counts: dict
    avg_final_counts: dict
    avg_modifications: float
    wall_time: dict
    type_latency: dict
    outcomes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "dataset": self.dataset,
            "total": self.total,
            "completed": self.completed,
            "failures": self.failures,
            "macro_f1": self.macro_f1,
            "per_hop_f1": {str(hops): score for hops, score in self.per_hop_f1.items()},
            "uncertain_count": self.uncertain_count,
            "avg_initial_counts": self.avg_initial_counts,
            "avg_final_counts": self.avg_final_counts,
            "avg_modifications": self.avg_modifications,
            "wall_time": self.wall_time,
            "type_latency": self.type_latency,
            "outcomes": [outcome.to_dict() for outcome in self.outcomes],
        }

    def render_table(self):
        def score(value):
            return "n/a" if value is None else f"{100 * value:.2f}"

        lines = [
            f"Dataset: {self.dataset}",
            f"Claims: {self.total} ({self.completed} completed, {len(self.failures)} failed)",
            f"Macro-F1: {score(self.macro_f1)}",
        ]
        for hops, value in sorted(self.per_hop_f1.items()):
            lines.append(f"  {hops}-hop: {score(value)}")
        lines.append(f"Uncertain (forced) verdicts: {self.uncertain_count}")
        lines.append("")
        lines.append(f"{'Node type':<12}{'initial -> final':>20}{'latency (s)':>14}")
        for node_type in self.avg_final_counts:
            initial = self.avg_initial_counts.get(node_type, 0.0)
            final = self.avg_final_counts[node_type]
            latency = self.type_latency.get(node_type)
            latency_text = "-" if latency is None else f"{latency:.3f}"
            lines.append(f"{node_type:<12}{f'{initial:.2f} → {final:.2f}':>20}{latency_text:>14}")
        lines.append(f"Average modifications: {self.avg_modifications:.2f}")
        if self.wall_time:
            lines.append(f"Wall time (s): mean {self.wall_time['mean']:.3f}, median {self.wall_time['median']:.3f}, "
                         f"max {self.wall_time['max']:.3f}")
        for failure in self.failures:
            lines.append(f"FAILED {failure['id']}: {failure['error']}")
        return "\n".join(lines) + "\n"


def _average_counts(outcomes, attribute):
    totals = {}
    for outcome in outcomes:
        for node_type, count in getattr(outcome, attribute).items():
            totals[node_type] = totals.get(node_type, 0) + count
    return {node_type: total / len(outcomes) for node_type, total in totals.items()}


def aggregate(outcomes, dataset="custom"):
    """
    Summarize per-claim outcomes. Averages use completed runs only.
    """
    done = [outcome for outcome in outcomes if outcome.completed]
    failures = [{"id": outcome.id, "error": outcome.error} for outcome in outcomes if not outcome.completed]
    overall = macro_f1([o.prediction for o in done], [o.gold for o in done]) if done else None
    per_hop = {}
    for hops in sorted({o.hops for o in done if o.hops is not None}):
        group = [o for o in done if o.hops == hops]
        per_hop[hops] = macro_f1([o.prediction for o in group], [o.gold for o in group])
    latencies = {}
    for outcome in done:
        for node_type, values in outcome.type_latency.items():
            latencies.setdefault(node_type, []).extend(values)
    wall_times = [o.wall_time for o in done]
    return EvalReport(
        dataset=dataset,
        total=len(outcomes),
        completed=len(done),
        failures=failures,
        macro_f1=overall,
        per_hop_f1=per_hop,
        uncertain_count=sum(1 for o in done if o.forced),
        avg_initial_counts=_average_counts(done, "initial_counts") if done else {},
        avg_final_counts=_average_counts(done, "final_counts") if done else {},
        avg_modifications=statistics.mean(o.modification_count for o in done) if done else 0.0,
        wall_time={"mean": statistics.mean(wall_times), "median": statistics.median(wall_times),
                   "max": max(wall_times)} if done else {},
        type_latency={node_type: statistics.mean(values) for node_type, values in latencies.items() if values},
        outcomes=list(outcomes),
    )


def claim_dir_name(record_id):
    return re.sub(r"[^\w.-]", "_", record_id) or "_"


def run_eval(records, engine, runs_dir=None, workers=2, dataset="custom"):
    """
    Verify every record with ``engine``, at most ``workers`` claims at a
    time, and aggregate the outcomes in dataset order. A claim that raises
    is reported as failed; the sweep goes on.
    """
    if not records:
        raise ValueError("nothing to evaluate")
    base = os.path.join(runs_dir, dataset) if runs_dir is not None else None

    def verify(record):
        out_dir = os.path.join(base, claim_dir_name(record.id)) if base is not None else None
        return engine.verify(record.claim, out_dir)

    outcomes = []
    with ThreadPoolExecutor(max_workers=max(1, workers), thread_name_prefix="verigraph-claim") as pool:
        pending = [(record, pool.submit(verify, record)) for record in records]
        for record, future in pending:
            try:
                result = future.result()
            except Exception as err:
                log.error(f"Claim `{record.id}` failed: {err}")
                outcomes.append(ClaimOutcome(record.id, record.claim, record.gold, record.hops,
                                             error=f"{type(err).__name__}: {err}"))
                continue
            outcomes.append(outcome_from_result(record, result))

    report = aggregate(outcomes, dataset)
    if base is not None:
        write_report(report, base)
    return report


def write_report(report, directory):
    utils.ensure_directory(directory)
    utils.write_json(os.path.join(directory, "report.json"), report.to_dict())
    with open(os.path.join(directory, "report.txt"), "w", encoding="utf-8") as table_file:
        table_file.write(report.render_table())
    log.info(f"Report written to `{directory}`.")


def load_outcomes(report_path):
    data = utils.read_json(report_path)
    return [ClaimOutcome.from_dict(entry) for entry in data.get("outcomes", [])]


def select_hard_subset(results_static, n=HARD_SUBSET_SIZE):
    """
    The first ``n`` claims, in dataset order, that a completed run got
    wrong. Failed runs are not counted as hard.
    """
    hard = [outcome.record() for outcome in results_static if outcome.completed and not outcome.correct]
    if len(hard) < n:
        log.warning(f"Only {len(hard)} hard claim(s) available, {n} requested.")
    return hard[:n]
