"""Session transcript of every opened value, tagged by leakage class, and its audit."""

from __future__ import annotations

import enum
import hashlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .field import MERSENNE_127, encode_elems, signed_lift


class LeakageClass(enum.IntEnum):
    COMPARISON_BIT = 1
    INSERTED_RECORD = 2
    MASKED_LOOKUP_INDEX = 3
    MASKED_COMPARISON_VALUE = 4


@dataclass(frozen=True)
class OpenedValue:
    value: int
    leakage_class: LeakageClass


@dataclass(frozen=True)
class Entry:
    """One exchange: every value opened in a round, under one class."""

    round: int
    gadget: int
    leakage_class: LeakageClass
    values: tuple[int, ...]
    context: str

    def opened(self):
        return [OpenedValue(v, self.leakage_class) for v in self.values]


# contexts that are not scored candidates
SETUP_CONTEXT = "setup"
FULL_CONTEXT = "entropy-full"
EMPTY_CONTEXT = "candidate:"


def candidate_context(parents) -> str:
    return "candidate:" + ",".join(str(v) for v in parents)


class Transcript:
    def __init__(self):
        self.entries: list[Entry] = []
        self._count = 0

    def record(self, round_: int, gadget: int, cls, values, context: str) -> None:
        values = tuple(values)
        self.entries.append(Entry(round_, gadget, cls, values, context))
        self._count += len(values)

    def __len__(self) -> int:
        """Number of opened values (not exchanges)."""
        return self._count

    def openings(self):
        """Yield (position, entry, value) for every opened value in order."""
        pos = 0
        for e in self.entries:
            for v in e.values:
                yield pos, e, v
                pos += 1

    def by_class(self) -> dict[str, int]:
        counts: Counter = Counter()
        for e in self.entries:
            counts[e.leakage_class] += len(e.values)
        return {cls.name: counts.get(cls, 0) for cls in LeakageClass}

    def digest(self) -> str:
        h = hashlib.sha256()
        for e in self.entries:
            ctx = e.context.encode()
            h.update(e.round.to_bytes(4, "big") + e.gadget.to_bytes(4, "big") + bytes([int(e.leakage_class)])
                     + len(e.values).to_bytes(4, "big") + len(ctx).to_bytes(2, "big") + ctx)
            h.update(encode_elems(e.values))
        return h.hexdigest()

    def summary(self) -> dict:
        return {"openings": len(self), "exchanges": len(self.entries), "by_class": self.by_class(),
                "digest": self.digest()}


@dataclass
class AuditReport:
    passed: bool
    violations: list[str] = field(default_factory=list)
    scored_candidates: int = 0
    by_class: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "violations": self.violations,
                "scored_candidates": self.scored_candidates, "by_class": self.by_class}


def transcript_audit(t: Transcript, pg, empty_preseeded: bool = False, p: int = MERSENNE_127) -> AuditReport:
    """Check that the transcript only opens what the leakage model allows.

    Every opening must carry a declared class, inserted-record openings must
    reproduce the PG scores in order, and each scored candidate may open at
    most two comparison bits and one record. ``empty_preseeded`` accepts a PG
    whose empty-set record was not opened in this transcript.
    """
    violations = []
    per_context: dict[str, Counter] = defaultdict(Counter)
    inserted = []
    for pos, e, value in t.openings():
        cls = e.leakage_class
        if not isinstance(cls, LeakageClass):
            violations.append(f"opening {pos} (round {e.round}, gadget {e.gadget}): unclassified opening")
            continue
        per_context[e.context][cls] += 1
        if cls == LeakageClass.COMPARISON_BIT and value not in (0, 1):
            violations.append(f"opening {pos}: comparison bit opened as {value}")
        if cls == LeakageClass.INSERTED_RECORD:
            inserted.append((pos, signed_lift(value, p), e.context))

    expected = list(pg.records)
    if empty_preseeded and expected and not expected[0].parents:
        expected = expected[1:]
    if len(inserted) != len(expected):
        violations.append(f"{len(inserted)} inserted-record openings for {len(expected)} PG records")
    for (pos, value, ctx), rec in zip(inserted, expected):
        if value != rec.score2:
            violations.append(f"opening {pos}: opened record {value} != PG score {rec.score2}")
        if ctx != candidate_context(rec.parents):
            violations.append(f"opening {pos}: record opened in context {ctx!r} for set {rec.parents}")

    scored = 0
    for ctx, counts in per_context.items():
        bits = counts[LeakageClass.COMPARISON_BIT]
        records = counts[LeakageClass.INSERTED_RECORD]
        if ctx.startswith("candidate:"):
            if ctx != EMPTY_CONTEXT:
                scored += 1
            if bits > 2:
                violations.append(f"{ctx}: {bits} comparison bits opened (max 2)")
            if records > 1:
                violations.append(f"{ctx}: {records} records opened (max 1)")
        elif bits or records:
            violations.append(f"{ctx}: comparison bits or records opened outside a candidate")
    return AuditReport(not violations, violations, scored, t.by_class())
