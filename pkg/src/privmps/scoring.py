"""Plaintext data handling and MDL scoring.

Scores are carried doubled (2 x MDL) so the 0.5 factor of the complexity
penalty stays integral. Two plaintext backends drive the lattice engine: a
float reference and the fixed-point oracle whose mantissas the secure
protocol must reproduce bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .field import fp_encode


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    arity: int
    states: tuple[str, ...] | None = None

    def code(self, cell: str) -> int:
        """State index of a CSV cell given either as a label or an integer code."""
        if self.states is not None and cell in self.states:
            return self.states.index(cell)
        try:
            value = int(cell)
        except ValueError:
            raise SchemaError(f"unknown label {cell!r} for variable {self.name}") from None
        if not 0 <= value < self.arity:
            raise SchemaError(f"code {value} out of range [0, {self.arity}) for variable {self.name}")
        return value


@dataclass(frozen=True)
class Schema:
    variables: tuple[Variable, ...]
    m_max: int = 4096

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SchemaError("variable names must be unique")
        for v in self.variables:
            if v.arity < 2:
                raise SchemaError(f"variable {v.name} needs arity >= 2")
            if v.states is not None and len(v.states) != v.arity:
                raise SchemaError(f"variable {v.name} lists {len(v.states)} states for arity {v.arity}")
        if self.m_max < 1:
            raise SchemaError("m_max must be positive")

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def arities(self) -> tuple[int, ...]:
        return tuple(v.arity for v in self.variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"no variable named {name!r}") from None

    def to_dict(self) -> dict:
        out = []
        for v in self.variables:
            entry = {"name": v.name, "arity": v.arity}
            if v.states is not None:
                entry["states"] = list(v.states)
            out.append(entry)
        return {"variables": out, "m_max": self.m_max}

    @classmethod
    def from_dict(cls, d: dict) -> Schema:
        try:
            variables = tuple(
                Variable(v["name"], int(v["arity"]), tuple(v["states"]) if v.get("states") else None)
                for v in d["variables"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from None
        return cls(variables, int(d.get("m_max", 4096)))

    @classmethod
    def load(cls, path) -> Schema:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class DataTable:
    rows: tuple[tuple[int, ...], ...]

    @property
    def m(self) -> int:
        return len(self.rows)

    def validate(self, schema: Schema) -> DataTable:
        for num, row in enumerate(self.rows):
            if len(row) != schema.n:
                raise SchemaError(f"row {num}: expected {schema.n} values, got {len(row)}")
            for value, var in zip(row, schema.variables):
                if not 0 <= value < var.arity:
                    raise SchemaError(f"row {num}: {var.name}={value} outside [0, {var.arity})")
        return self

    def __add__(self, other: DataTable) -> DataTable:
        return DataTable(self.rows + other.rows)

    @classmethod
    def concat(cls, tables) -> DataTable:
        return cls(tuple(row for t in tables for row in t.rows))

    def as_array(self, n: int) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, n), dtype=np.int64)
        return np.asarray(self.rows, dtype=np.int64)


@dataclass(frozen=True)
class ContingencyVector:
    """Joint counts N_ijk, laid out cell-major: entry (j, k) at j * r_i + k."""

    target: int
    parents: tuple[int, ...]
    r_i: int
    counts: tuple[int, ...]

    @property
    def q(self) -> int:
        return len(self.counts) // self.r_i

    @property
    def m(self) -> int:
        return sum(self.counts)

    def cells(self):
        """Yield (N_ij, [N_ij0, ..., N_ij(r_i-1)]) for every parent state j."""
        r = self.r_i
        for j in range(self.q):
            row = self.counts[j * r:(j + 1) * r]
            yield sum(row), row

    def __add__(self, other: ContingencyVector) -> ContingencyVector:
        if (self.target, self.parents, self.r_i) != (other.target, other.parents, other.r_i):
            raise ValueError("contingency vectors describe different variable sets")
        return ContingencyVector(self.target, self.parents, self.r_i,
                                 tuple(a + b for a, b in zip(self.counts, other.counts)))


@dataclass(frozen=True)
class LogTable:
    """T[x] = fixed-point ln(x) for x in [1, m_max], with T[0] = 0."""

    entries: tuple[int, ...]
    f: int

    def __getitem__(self, x: int) -> int:
        return self.entries[x]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def m_max(self) -> int:
        return len(self.entries) - 1


def build_log_table(m_max: int, f: int = 16) -> LogTable:
    if m_max < 1:
        raise ValueError("m_max must be positive")
    # T[0] is only ever multiplied by N_ijk = 0
    return LogTable((0,) + tuple(fp_encode(math.log(x), f, None) for x in range(1, m_max + 1)), f)


def q_of(parents, arities) -> int:
    return math.prod(arities[v] for v in parents)


def radix_index(states, parents, arities) -> int:
    """Mixed-radix rank of ``states`` (one per variable of ``parents``).

    ``parents`` is sorted ascending; the first variable has stride 1.
    """
    j, stride = 0, 1
    for s, v in zip(states, parents):
        if not 0 <= s < arities[v]:
            raise ValueError(f"state {s} out of range for variable {v} of arity {arities[v]}")
        j += s * stride
        stride *= arities[v]
    return j


def contingency(table: DataTable, arities, target: int, parents) -> ContingencyVector:
    parents = tuple(sorted(parents))
    if target in parents:
        raise ValueError("target cannot be its own parent")
    r_i = arities[target]
    q = q_of(parents, arities)
    data = table.as_array(len(arities))
    j = np.zeros(len(data), dtype=np.int64)
    stride = 1
    for v in parents:
        j += data[:, v] * stride
        stride *= arities[v]
    flat = j * r_i + data[:, target] if len(data) else j
    counts = np.bincount(flat, minlength=q * r_i)
    return ContingencyVector(target, parents, r_i, tuple(int(c) for c in counts))


def entropy_float(c: ContingencyVector) -> float:
    """sum_{j,k} N_ijk * ln(N_ij / N_ijk), zero counts contributing nothing."""
    h = 0.0
    for n_j, row in c.cells():
        for n_jk in row:
            if n_jk:
                h += n_jk * (math.log(n_j) - math.log(n_jk))
    return h


def penalty_float(c: ContingencyVector, m: int) -> float:
    return 0.5 * c.q * (math.log(m) if m > 0 else 0.0) * (c.r_i - 1)


def mdl_float(c: ContingencyVector, m: int) -> float:
    return entropy_float(c) + penalty_float(c, m)


def _check_bound(mantissa: int, K: int | None) -> int:
    if K is not None and abs(mantissa) >= 1 << K:
        raise OverflowError(f"doubled score mantissa {mantissa} exceeds 2^{K}")
    return mantissa


def entropy2_fixed(c: ContingencyVector, T: LogTable, K: int | None = 40) -> int:
    """Mantissa of twice the quantized conditional entropy."""
    h = 0
    for n_j, row in c.cells():
        t_j = T[n_j]
        for n_jk in row:
            h += n_jk * (t_j - T[n_jk])
    return _check_bound(2 * h, K)


def nc2_fixed(q: int, r_i: int, m: int, T: LogTable) -> int:
    return q * (r_i - 1) * T[m]


def score2_fixed(c: ContingencyVector, m: int, T: LogTable, K: int | None = 40) -> int:
    """Mantissa of 2 x MDL: doubled entropy plus q_U (r_i - 1) T[m]."""
    if m > T.m_max:
        raise ValueError(f"m = {m} exceeds the log table range {T.m_max}")
    return _check_bound(entropy2_fixed(c, T, None) + nc2_fixed(c.q, c.r_i, m, T), K)


def max_score2(schema: Schema, target: int, T: LogTable) -> int:
    """Upper bound on any doubled score or bound value for ``target``."""
    q_full = math.prod(a for v, a in enumerate(schema.arities) if v != target)
    t_max = T[schema.m_max]
    return 2 * schema.m_max * t_max + q_full * (schema.arities[target] - 1) * t_max


# -- plaintext scoring backends ----------------------------------------------

class ScoringBackend:
    """What the lattice traversal needs from a scorer.

    Handles returned by ``entropy2``/``nc2``/``add`` are opaque to the engine;
    ``lt`` accepts handles or public scores and returns a public bool, and
    ``reveal`` turns a handle into a public doubled score.
    """

    n_vars: int
    target: int
    arities: tuple[int, ...]

    def entropy2(self, parents):
        raise NotImplementedError

    def entropy2_full(self):
        raise NotImplementedError

    def nc2(self, parents):
        raise NotImplementedError

    def add(self, a, b):
        raise NotImplementedError

    def lt(self, a, b) -> bool:
        raise NotImplementedError

    def reveal(self, h):
        raise NotImplementedError

    def end_layer(self, layer: int, next_sets, records) -> None:
        pass

    @cached_property
    def full_set(self) -> tuple[int, ...]:
        return tuple(v for v in range(self.n_vars) if v != self.target)


@dataclass
class QuantizedBackend(ScoringBackend):
    """Fixed-point oracle: exactly the integers the secure protocol computes."""

    schema: Schema
    table: DataTable
    target: int
    f: int = 16
    K: int | None = 40
    log_table: LogTable | None = None

    def __post_init__(self):
        if self.log_table is None:
            self.log_table = build_log_table(self.schema.m_max, self.f)
        if self.table.m > self.schema.m_max:
            raise SchemaError(f"{self.table.m} rows exceed m_max = {self.schema.m_max}")
        self.n_vars = self.schema.n
        self.arities = self.schema.arities

    def counts(self, parents) -> ContingencyVector:
        return contingency(self.table, self.arities, self.target, parents)

    def entropy2(self, parents) -> int:
        return entropy2_fixed(self.counts(parents), self.log_table, self.K)

    def entropy2_full(self) -> int:
        return entropy2_fixed(self.counts(self.full_set), self.log_table, self.K)

    def nc2(self, parents) -> int:
        return nc2_fixed(q_of(parents, self.arities), self.arities[self.target], self.table.m, self.log_table)

    def add(self, a, b):
        return a + b

    def lt(self, a, b) -> bool:
        return a < b

    def reveal(self, h) -> int:
        return h


@dataclass
class FloatBackend(ScoringBackend):
    """Unquantized float reference (doubled scores as floats)."""

    schema: Schema
    table: DataTable
    target: int

    def __post_init__(self):
        self.n_vars = self.schema.n
        self.arities = self.schema.arities

    def entropy2(self, parents) -> float:
        return 2 * entropy_float(contingency(self.table, self.arities, self.target, parents))

    def entropy2_full(self) -> float:
        return self.entropy2(self.full_set)

    def nc2(self, parents) -> float:
        m = self.table.m
        return q_of(parents, self.arities) * (self.arities[self.target] - 1) * (math.log(m) if m else 0.0)

    def add(self, a, b):
        return a + b

    def lt(self, a, b) -> bool:
        return a < b

    def reveal(self, h) -> float:
        return h
