import itertools

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from privmps.lattice import PGStructure, best_subset, brute_force_mps, maximal_parent_sets, select_parents
from privmps.scoring import DataTable, FloatBackend, QuantizedBackend, Schema, Variable
from privmps.synth import generate

T2D = 3


def pg_of(*records):
    pg = PGStructure(0)
    for parents, score in records:
        pg.insert(parents, score)
    return pg


def test_best_subset_examples():
    assert best_subset(pg_of(((), 41589)), (1,)) == 41589
    assert best_subset(pg_of(((), 10), ((1,), 8)), (1, 2)) == 8
    assert best_subset(pg_of(((), 10), ((3,), 7)), (1, 2)) == 10
    with pytest.raises(ValueError):
        best_subset(pg_of(((), 10)), ())
    with pytest.raises(ValueError):
        best_subset(PGStructure(0), (1,))


def test_select_parents_examples():
    pg = pg_of(((), 10), ((1,), 8), ((2,), 9))
    assert select_parents(pg, ()).parents == ()
    assert select_parents(pg, (2,)).parents == (2,)
    assert select_parents(pg, (1, 2)).score2 == 8
    with pytest.raises(ValueError):
        select_parents(PGStructure(0), (1,))


def test_patients_corrected(patients):
    schema, tables = patients
    backend = QuantizedBackend(schema, tables[0] + tables[1], T2D)
    trace = []
    pg = maximal_parent_sets(backend, 3, "corrected", trace=trace)
    assert pg.sets() == [()]
    assert pg.records[0].score2 == 545112
    assert abs(pg.records[0].score(16) - 4.158883) <= 12 * 2 ** -16
    # the three singletons score worse than the empty set
    singles = {v: (backend.nc2((v,)) + backend.entropy2((v,))) / 2 ** 17 for v in range(3)}
    assert singles[0] == pytest.approx(5.9507, abs=1e-3)
    assert singles[1] == pytest.approx(5.6108, abs=1e-3)
    assert singles[2] == pytest.approx(5.9835, abs=1e-3)
    assert trace[:3] == [(0,), (1,), (2,)]


def test_patients_verbatim_and_lmax0(patients):
    schema, tables = patients
    backend = QuantizedBackend(schema, tables[0] + tables[1], T2D)
    assert maximal_parent_sets(backend, None, "verbatim").sets() == [()]
    trace = []
    assert maximal_parent_sets(backend, 0, trace=trace).sets() == [()]
    assert trace == []
    with pytest.raises(ValueError):
        maximal_parent_sets(backend, mode="other")
    with pytest.raises(ValueError):
        maximal_parent_sets(backend, -1)


def test_float_backend_same_sets(patients):
    schema, tables = patients
    pg = maximal_parent_sets(FloatBackend(schema, tables[0] + tables[1], T2D))
    assert pg.sets() == [()]
    assert pg.records[0].score(None) == pytest.approx(4.158883, abs=1e-6)


def test_copy_variable_is_maximal():
    schema, table = generate(4, 512, 2, seed=11, copy_last=True, m_max=512)
    pg = maximal_parent_sets(QuantizedBackend(schema, table, 3))
    assert (0,) in pg.sets()
    assert pg.records == brute_force_mps(QuantizedBackend(schema, table, 3)).records


def test_single_variable_pool():
    schema = Schema((Variable("A", 2), Variable("B", 2)), 16)
    table = DataTable(((0, 1), (1, 0), (1, 1)))
    assert maximal_parent_sets(QuantizedBackend(schema, table, 0)).sets() in ([()], [(), (1,)])
    one = Schema((Variable("A", 3),), 16)
    pg = maximal_parent_sets(QuantizedBackend(one, DataTable(((0,), (2,))), 0))
    assert pg.sets() == [()]


def test_empty_set_penalty_changes_only_the_empty_record(patients):
    schema, tables = patients
    backend = QuantizedBackend(schema, tables[0] + tables[1], T2D)
    plain = maximal_parent_sets(backend)
    penalized = maximal_parent_sets(backend, empty_set_penalty=True)
    assert penalized.records[0].score2 == plain.records[0].score2 + backend.nc2(())
    assert penalized.records == brute_force_mps(backend, empty_set_penalty=True).records


def test_pg_json_roundtrip(patients):
    schema, tables = patients
    pg = maximal_parent_sets(QuantizedBackend(schema, tables[0] + tables[1], T2D))
    d = pg.to_dict(schema.names)
    assert d["target"] == "T2D" and d["records"][0]["set"] == []
    assert PGStructure.from_dict(d, schema.names) == pg


def test_brute_force_size_guard():
    schema, table = generate(18, 10, 2, seed=0, m_max=16)
    with pytest.raises(ValueError):
        brute_force_mps(QuantizedBackend(schema, table, 0))


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(2, 5), st.integers(10, 120), st.sampled_from([2, 3]), st.integers(0, 10 ** 6), st.data())
def test_lattice_equals_brute_force(n, m, arity, seed, data):
    schema, table = generate(n, m, arity, seed, m_max=128)
    target = data.draw(st.integers(0, n - 1))
    l_max = data.draw(st.one_of(st.none(), st.integers(0, n - 1)))
    backend = QuantizedBackend(schema, table, target)
    assert maximal_parent_sets(backend, l_max).records == brute_force_mps(backend, l_max).records


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(10, 80), st.integers(0, 10 ** 6))
def test_maximality_invariant(n, m, seed):
    schema, table = generate(n, m, 2, seed, m_max=128)
    backend = QuantizedBackend(schema, table, n - 1)
    pg = maximal_parent_sets(backend)
    score = {(): backend.entropy2(())}
    for k in range(1, n):
        for U in itertools.combinations(range(n - 1), k):
            score[U] = backend.nc2(U) + backend.entropy2(U)
    for rec in pg.records:
        assert rec.score2 == score[rec.parents]
        assert all(rec.score2 < score[S] for k in range(len(rec.parents))
                   for S in itertools.combinations(rec.parents, k))
