import hashlib
import re
from dataclasses import dataclass, replace


_SPACES = re.compile(r"\s+")


def normalized_content_hash(content):
    normalized = _SPACES.sub(" ", content).strip().lower()
    return hashlib.sha256(normalized.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class EvidenceItem:
    source: str
    content: str
    score: float
    rank: int

    def key(self):
        """
        Dedupe key: the same paragraph from the same source counts once,
        whatever its whitespace or case.
        """
        return (self.source, normalized_content_hash(self.content))

    def to_dict(self):
        return {"source": self.source, "content": self.content, "score": self.score, "rank": self.rank}

    @classmethod
    def from_dict(cls, data):
        return cls(source=str(data["source"]), content=str(data["content"]),
                   score=float(data["score"]), rank=int(data["rank"]))


class EvidenceSet:
    """
    Ordered, duplicate-free list of evidence items. Instances are immutable;
    every combining operation returns a new set.
    """

    def __init__(self, items=()):
        seen = set()
        kept = []
        for item in items:
            if item.key() in seen:
                continue
            seen.add(item.key())
            kept.append(item)
        self._items = tuple(kept)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        return self._items[index]

    def __bool__(self):
        return len(self._items) > 0

    def __eq__(self, other):
        if not isinstance(other, EvidenceSet):
            return NotImplemented
        return self._items == other._items

    def __repr__(self):
        return f"EvidenceSet({list(self._items)!r})"

    def items(self):
        return list(self._items)

    def reranked(self):
        return EvidenceSet(replace(item, rank=i) for i, item in enumerate(self._items, start=1))

    def truncated(self, k):
        return EvidenceSet(self._items[:k])

    def to_list(self):
        return [item.to_dict() for item in self._items]

    @classmethod
    def from_list(cls, data):
        return cls(EvidenceItem.from_dict(entry) for entry in data or [])


def merge_evidence(sets):
    """
    Concatenate evidence sets in argument order. The first occurrence of an
    item wins and ranks are reassigned 1..n.
    """
    merged = []
    for evidence in sets:
        merged.extend(evidence)
    return EvidenceSet(merged).reranked()
