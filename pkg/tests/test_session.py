import pytest

from privmps.field import MERSENNE_127, FieldParams, decode_elems
from privmps.lattice import maximal_parent_sets
from privmps.scoring import DataTable, QuantizedBackend, Schema, contingency
from privmps.session import ConfigError, SessionConfig, SessionError, run_inprocess
from privmps.synth import generate, split
from privmps.transcript import transcript_audit
from privmps.transport import LocalHub
from privmps.wire import Frame, MsgType

P = MERSENNE_127


def oracle(schema, tables, target, **kw):
    t = schema.index(target)
    return maximal_parent_sets(QuantizedBackend(schema, DataTable.concat(tables), t), **kw)


@pytest.mark.parametrize("beta", [2, 3])
def test_patients_matches_oracle(patients, beta):
    schema, tables = patients
    res = run_inprocess(SessionConfig(schema, "T2D", 2, beta, seed=7), tables)
    assert res.pg.records == oracle(schema, tables, "T2D").records
    assert all(pg.records == res.pg.records for pg in res.owner_pgs)
    report = transcript_audit(res.transcript, res.pg)
    assert report.passed, report.violations
    assert report.scored_candidates == len(res.csp[0].trace)
    assert len({c.transcript.digest() for c in res.csp}) == 1


def test_single_owner_matches_oracle(patients):
    schema, tables = patients
    whole = tables[0] + tables[1]
    res = run_inprocess(SessionConfig(schema, "T2D", 1, 3, seed=1), [whole])
    assert res.pg.records == oracle(schema, [whole], "T2D").records


def test_fixed_seed_replays_transcript(patients):
    schema, tables = patients
    a = run_inprocess(SessionConfig(schema, "T2D", 2, 3, seed=5), tables)
    b = run_inprocess(SessionConfig(schema, "T2D", 2, 3, seed=5), tables)
    c = run_inprocess(SessionConfig(schema, "T2D", 2, 3, seed=6), tables)
    assert a.transcript.digest() == b.transcript.digest()
    assert a.transcript.digest() != c.transcript.digest()
    assert a.pg.records == c.pg.records


def test_owner_with_no_rows(patients):
    schema, tables = patients
    whole = tables[0] + tables[1]
    seen = {}

    def spy(src, dst, data):
        f = Frame.decode(data)
        if src == "do1" and f.mtype == MsgType.INPUT_M_SHARE:
            seen.setdefault("m", []).append(decode_elems(f.payload)[0])
        return data

    res = run_inprocess(SessionConfig(schema, "T2D", 2, 3, seed=2), [whole, DataTable(())], LocalHub(spy))
    assert res.pg.records == oracle(schema, [whole], "T2D").records
    assert sum(seen["m"]) % P == 0


def test_count_shares_reconstruct_contingency(patients):
    schema, tables = patients
    got: dict = {}

    def spy(src, dst, data):
        f = Frame.decode(data)
        if f.mtype == MsgType.COUNT_SHARES:
            vals = decode_elems(f.payload)
            parents = tuple(vals[2:2 + vals[1]])
            acc = got.setdefault((src, parents), [0] * (len(vals) - 2 - vals[1]))
            for i, v in enumerate(vals[2 + vals[1]:]):
                acc[i] = (acc[i] + v) % P
        if f.mtype == MsgType.INPUT_M_SHARE and src == "do0":
            got.setdefault("m0", []).append(decode_elems(f.payload)[0])
        return data

    run_inprocess(SessionConfig(schema, "T2D", 2, 3, seed=3), tables, LocalHub(spy))
    assert sum(got.pop("m0")) % P == 3
    assert got
    for (src, parents), counts in got.items():
        owner = tables[int(src[2:])]
        assert tuple(counts) == contingency(owner, schema.arities, 3, parents).counts


def test_dealer_sees_only_requests(patients):
    schema, tables = patients
    inbound_dealer = []

    def spy(src, dst, data):
        if dst == "dealer":
            inbound_dealer.append(Frame.decode(data))
        return data

    res = run_inprocess(SessionConfig(schema, "T2D", 2, 3, seed=4), tables, LocalHub(spy))
    kinds = {f.mtype for f in inbound_dealer}
    assert kinds == {MsgType.SETUP, MsgType.SETUP_ACK, MsgType.MATERIAL_REQUEST}
    for f in inbound_dealer:
        if f.mtype == MsgType.MATERIAL_REQUEST:
            assert len(decode_elems(f.payload)) == 3
    consumed = res.csp[0].material
    assert res.dealer.issued == {k: consumed.get(k, 0) for k in res.dealer.issued}


def test_tampered_frame_length_aborts(patients):
    schema, tables = patients
    state = {"done": False}

    def corrupt(src, dst, data):
        if not state["done"] and Frame.decode(data).mtype == MsgType.OPEN_PART:
            state["done"] = True
            return (int.from_bytes(data[:4], "big") + 5).to_bytes(4, "big") + data[4:]
        return data

    cfg = SessionConfig(schema, "T2D", 2, 3, seed=1, timeout=10)
    with pytest.raises(SessionError) as err:
        run_inprocess(cfg, tables, LocalHub(corrupt))
    assert "length field" in str(err.value.root)
    assert set(err.value.errors) >= {"do0", "do1"}


def test_wrong_session_id_aborts_at_setup(patients):
    schema, tables = patients

    def rewrite(src, dst, data):
        if src == "do1":
            return data[:5] + bytes(16) + data[21:]
        return data

    with pytest.raises(SessionError) as err:
        run_inprocess(SessionConfig(schema, "T2D", 2, 3, seed=1, timeout=10), tables, LocalHub(rewrite))
    assert "session id mismatch" in str(err.value)


def test_config_digest_mismatch_aborts(patients):
    schema, tables = patients

    def flip(src, dst, data):
        f = Frame.decode(data)
        if src == "csp2" and f.mtype == MsgType.SETUP:
            return Frame(f.mtype, f.session_id, 0, 0, f.payload[:16] + bytes(32)).encode()
        return data

    with pytest.raises(SessionError) as err:
        run_inprocess(SessionConfig(schema, "T2D", 2, 3, seed=1, timeout=10), tables, LocalHub(flip))
    assert "digest mismatch" in str(err.value)


def test_partition_invariance_random():
    schema, table = generate(4, 60, 2, seed=21, m_max=64)
    expected = oracle(schema, [table], "X3").records
    for sizes in [(60,), (0, 60), (20, 0, 40), (15, 15, 15, 15)]:
        shards = split(table, len(sizes), sizes=list(sizes))
        res = run_inprocess(SessionConfig(schema, "X3", len(sizes), 2, seed=len(sizes)), shards)
        assert res.pg.records == expected
        assert transcript_audit(res.transcript, res.pg).passed


def test_verbatim_mode_session(patients):
    schema, tables = patients
    res = run_inprocess(SessionConfig(schema, "T2D", 2, 2, mode="verbatim", seed=1), tables)
    assert res.pg.records == oracle(schema, tables, "T2D", mode="verbatim").records


def test_config_validation(patients):
    schema, _ = patients
    with pytest.raises(ConfigError):
        SessionConfig(schema, "T2D", 2, 1)
    with pytest.raises(ConfigError):
        SessionConfig(schema, "nope", 2)
    with pytest.raises(ConfigError):
        SessionConfig(schema, "T2D", 2, mode="other")
    with pytest.raises(ConfigError):
        SessionConfig(schema, "T2D", 2, cell_budget=5)
    with pytest.raises(ConfigError):
        SessionConfig(Schema(schema.variables, 4096), "T2D", 2, params=FieldParams(K=20))
    with pytest.raises(ConfigError):
        run_inprocess(SessionConfig(schema, "T2D", 2), [DataTable(())])


def test_config_roundtrip(tmp_path, patients):
    schema, _ = patients
    cfg = SessionConfig(schema, "T2D", 2, 3, l_max=2, seed=9,
                        addresses={pid: ("127.0.0.1", 5000 + k) for k, pid in
                                   enumerate(["dealer", "csp0", "csp1", "csp2", "do0", "do1"])})
    cfg.dump(tmp_path / "c.json")
    back = SessionConfig.load(tmp_path / "c.json")
    assert back.digest() == cfg.digest()
    assert back.roster == ["dealer", "csp0", "csp1", "csp2", "do0", "do1"]
    other = SessionConfig(schema, "T2D", 2, 3, l_max=1, seed=9, session_id=cfg.session_id)
    assert other.digest() != SessionConfig(schema, "T2D", 2, 3, l_max=2, seed=9,
                                           session_id=cfg.session_id).digest()
