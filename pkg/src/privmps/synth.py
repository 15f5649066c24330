"""Seeded synthetic categorical data with planted dependencies."""

from __future__ import annotations

import numpy as np

from .scoring import DataTable, Schema, Variable


def generate(n: int, m: int, arities, seed: int, noise: float = 0.2, max_parents: int = 2,
             copy_last: bool = False, m_max: int | None = None) -> tuple[Schema, DataTable]:
    """Draw ``m`` rows over ``n`` variables.

    Each variable after the first is, with probability 0.7, a random function
    of up to ``max_parents`` earlier variables, resampled uniformly with
    probability ``noise``. ``copy_last`` makes the last variable an exact copy
    of the first (arities permitting).
    """
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    arities = list(arities) if not isinstance(arities, int) else [arities] * n
    if len(arities) != n:
        raise ValueError("one arity per variable")
    if copy_last:
        arities[-1] = arities[0]
    rng = np.random.default_rng(seed)
    data = np.zeros((m, n), dtype=np.int64)
    for v in range(n):
        r = arities[v]
        if copy_last and v == n - 1 and n > 1:
            data[:, v] = data[:, 0]
            continue
        uniform = rng.integers(0, r, size=m)
        if v == 0 or rng.random() > 0.7:
            data[:, v] = uniform
            continue
        k = int(rng.integers(1, min(max_parents, v) + 1))
        parents = sorted(rng.choice(v, size=k, replace=False).tolist())
        q = int(np.prod([arities[u] for u in parents]))
        cpt = rng.integers(0, r, size=q)
        j = np.zeros(m, dtype=np.int64)
        stride = 1
        for u in parents:
            j += data[:, u] * stride
            stride *= arities[u]
        noisy = rng.random(m) < noise
        data[:, v] = np.where(noisy, uniform, cpt[j])
    schema = Schema(tuple(Variable(f"X{v}", arities[v]) for v in range(n)),
                    m_max if m_max is not None else max(m, 1))
    return schema, DataTable(tuple(tuple(int(x) for x in row) for row in data))


def split(table: DataTable, shards: int, seed: int = 0, sizes=None) -> list[DataTable]:
    """Partition rows into ``shards`` owners, keeping row order within each owner.

    Concatenating the shards in owner order gives back a row permutation of
    ``table``; with ``sizes`` the cut points are explicit (zeros allowed).
    """
    if shards < 1:
        raise ValueError("need at least one shard")
    m = table.m
    if sizes is None:
        rng = np.random.default_rng(seed)
        cuts = np.sort(rng.integers(0, m + 1, size=shards - 1)) if shards > 1 else np.array([], dtype=int)
        bounds = [0, *cuts.tolist(), m]
    else:
        if len(sizes) != shards or sum(sizes) != m:
            raise ValueError("sizes must list one count per shard and sum to m")
        bounds = np.concatenate([[0], np.cumsum(sizes)]).tolist()
    return [DataTable(table.rows[bounds[i]:bounds[i + 1]]) for i in range(shards)]
