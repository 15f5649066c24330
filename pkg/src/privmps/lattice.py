"""Breadth-first subset-lattice traversal producing maximal parent sets.

The traversal only sees scoring handles and public comparison outcomes, so
the same control flow drives the plaintext oracles and the secure protocol.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .scoring import ScoringBackend

MODES = ("corrected", "verbatim")


@dataclass(frozen=True)
class ParentSetRecord:
    parents: tuple[int, ...]
    score2: int | float

    def score(self, f: int | None) -> float:
        """Decoded (undoubled) MDL score."""
        if f is None:
            return self.score2 / 2
        return self.score2 / (1 << (f + 1))


@dataclass
class PGStructure:
    target: int
    mode: str = "corrected"
    f: int | None = 16
    records: list[ParentSetRecord] = field(default_factory=list)

    def insert(self, parents, score2) -> None:
        self.records.append(ParentSetRecord(tuple(parents), score2))

    def sets(self) -> list[tuple[int, ...]]:
        return [r.parents for r in self.records]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_dict(self, names=None) -> dict:
        def label(v):
            return names[v] if names is not None else v

        return {
            "target": label(self.target),
            "mode": self.mode,
            "f": self.f,
            "records": [
                {
                    "set": [label(v) for v in r.parents],
                    "score2_mantissa": r.score2 if self.f is not None else None,
                    "score": r.score(self.f),
                }
                for r in self.records
            ],
        }

    def to_json(self, names=None) -> str:
        return json.dumps(self.to_dict(names), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict, names=None) -> PGStructure:
        def index(v):
            return names.index(v) if names is not None else int(v)

        pg = cls(index(d["target"]), d["mode"], d["f"])
        for r in d["records"]:
            score2 = r["score2_mantissa"] if d["f"] is not None else 2 * r["score"]
            pg.insert(tuple(index(v) for v in r["set"]), score2)
        return pg


def best_subset(pg: PGStructure, parents) -> int | float:
    """Lowest score among records whose set is a strict subset of ``parents``."""
    parents = frozenset(parents)
    if not parents:
        raise ValueError("the empty set has no strict subsets")
    candidates = [r.score2 for r in pg.records if frozenset(r.parents) < parents]
    if not candidates:
        raise ValueError("PG structure does not contain the empty set")
    return min(candidates)


def select_parents(pg: PGStructure, allowed) -> ParentSetRecord:
    """Best record drawing parents only from ``allowed``; ties go to the earliest."""
    allowed = frozenset(allowed)
    best = None
    for r in pg.records:
        if frozenset(r.parents) <= allowed and (best is None or r.score2 < best.score2):
            best = r
    if best is None:
        raise ValueError("PG structure is empty")
    return best


def _empty_record_score(backend: ScoringBackend, empty_set_penalty: bool):
    s = backend.entropy2(())
    if empty_set_penalty:
        s = backend.add(s, backend.nc2(()))
    return s


def maximal_parent_sets(backend: ScoringBackend, l_max: int | None = None, mode: str = "corrected",
                        empty_set_penalty: bool = False, trace: list | None = None) -> PGStructure:
    """Enumerate maximal parent sets of ``backend.target``.

    In ``verbatim`` mode a candidate is kept and expanded when the best
    subset score is at most the bound w; ``corrected`` inverts that test,
    which is the direction under which w actually prunes supersets.
    Candidates scored are appended to ``trace`` in order.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    pool = backend.full_set
    if l_max is None:
        l_max = len(pool)
    if l_max < 0:
        raise ValueError("l_max must be non-negative")

    H = backend.entropy2_full()
    pg = PGStructure(backend.target, mode, getattr(backend, "f", None))
    pg.insert((), backend.reveal(_empty_record_score(backend, empty_set_penalty)))

    next_sets = [(v,) for v in pool]
    layer = 1
    while next_sets and layer <= l_max:
        current, next_sets, banned = next_sets, {}, set()
        for U in current:
            grown = [tuple(sorted(U + (v,))) for v in pool if v not in U]
            nc = backend.nc2(U)
            s = backend.add(nc, backend.entropy2(U))
            s_best = best_subset(pg, U)
            w = backend.add(nc, H)
            if trace is not None:
                trace.append(U)
            # bit = [w < s']; verbatim continues on s' <= w, corrected on s' > w
            bit = backend.lt(w, s_best)
            if bit == (mode == "corrected"):
                if backend.lt(s, s_best):
                    pg.insert(U, backend.reveal(s))
                next_sets.update(dict.fromkeys(grown))
            else:
                banned.update(grown)
        next_sets = sorted(c for c in next_sets if c not in banned)
        backend.end_layer(layer, next_sets, pg.records)
        layer += 1
    return pg


def brute_force_mps(backend: ScoringBackend, l_max: int | None = None, empty_set_penalty: bool = False,
                    max_vars: int = 16) -> PGStructure:
    """Maximal parent sets by exhaustive scoring of every subset (no pruning)."""
    pool = backend.full_set
    if len(pool) + 1 > max_vars:
        raise ValueError(f"brute force limited to {max_vars} variables")
    if l_max is None:
        l_max = len(pool)
    scores = {(): backend.reveal(_empty_record_score(backend, empty_set_penalty))}
    for size in range(1, l_max + 1):
        for U in itertools.combinations(pool, size):
            scores[U] = backend.reveal(backend.add(backend.nc2(U), backend.entropy2(U)))
    pg = PGStructure(backend.target, "brute-force", getattr(backend, "f", None))
    for U in sorted(scores, key=lambda s: (len(s), s)):
        subs = (S for k in range(len(U)) for S in itertools.combinations(U, k))
        if all(scores[U] < scores[S] for S in subs):
            pg.insert(U, scores[U])
    return pg
