from privmps.lattice import PGStructure
from privmps.transcript import (EMPTY_CONTEXT, LeakageClass, Transcript, candidate_context, transcript_audit)


def pg_with(*records):
    pg = PGStructure(3)
    for parents, score in records:
        pg.insert(parents, score)
    return pg


def test_empty_transcript_with_preseeded_empty_set_passes():
    report = transcript_audit(Transcript(), pg_with(((), 545112)), empty_preseeded=True)
    assert report.passed and report.scored_candidates == 0


def test_unclassified_opening_is_located():
    t = Transcript()
    t.record(1, 1, LeakageClass.MASKED_LOOKUP_INDEX, [3], "setup")
    t.record(2, 5, "mystery", [9], candidate_context((0,)))
    report = transcript_audit(t, pg_with(((), 1)), empty_preseeded=True)
    assert not report.passed
    assert any("round 2, gadget 5" in v for v in report.violations)


def test_record_openings_must_match_pg():
    t = Transcript()
    t.record(1, 1, LeakageClass.INSERTED_RECORD, [10], EMPTY_CONTEXT)
    t.record(2, 2, LeakageClass.COMPARISON_BIT, [1], candidate_context((1,)))
    t.record(3, 3, LeakageClass.COMPARISON_BIT, [1], candidate_context((1,)))
    t.record(4, 4, LeakageClass.INSERTED_RECORD, [8], candidate_context((1,)))
    assert transcript_audit(t, pg_with(((), 10), ((1,), 8))).passed
    assert not transcript_audit(t, pg_with(((), 10), ((1,), 7))).passed
    assert not transcript_audit(t, pg_with(((), 10))).passed


def test_per_candidate_limits():
    t = Transcript()
    t.record(1, 1, LeakageClass.INSERTED_RECORD, [10], EMPTY_CONTEXT)
    ctx = candidate_context((0, 2))
    t.record(2, 2, LeakageClass.COMPARISON_BIT, [1, 0, 1], ctx)
    report = transcript_audit(t, pg_with(((), 10)))
    assert not report.passed and report.scored_candidates == 1


def test_comparison_bits_only_inside_candidates_and_binary():
    t = Transcript()
    t.record(1, 1, LeakageClass.INSERTED_RECORD, [10], EMPTY_CONTEXT)
    t.record(2, 2, LeakageClass.COMPARISON_BIT, [1], "setup")
    assert not transcript_audit(t, pg_with(((), 10))).passed
    t = Transcript()
    t.record(1, 1, LeakageClass.INSERTED_RECORD, [10], EMPTY_CONTEXT)
    t.record(2, 2, LeakageClass.COMPARISON_BIT, [2], candidate_context((0,)))
    assert not transcript_audit(t, pg_with(((), 10))).passed


def test_negative_records_are_lifted():
    t = Transcript()
    t.record(1, 1, LeakageClass.INSERTED_RECORD, [(2 ** 127 - 1) - 4], EMPTY_CONTEXT)
    assert transcript_audit(t, pg_with(((), -4))).passed


def test_digest_and_counts():
    a, b = Transcript(), Transcript()
    for t in (a, b):
        t.record(1, 1, LeakageClass.MASKED_COMPARISON_VALUE, [5, 6], "setup")
    assert a.digest() == b.digest()
    b.record(2, 1, LeakageClass.COMPARISON_BIT, [0], candidate_context((0,)))
    assert a.digest() != b.digest()
    assert len(b) == 3
    assert b.by_class()["MASKED_COMPARISON_VALUE"] == 2
    assert b.summary()["exchanges"] == 2
    assert [o.value for o in b.entries[0].opened()] == [5, 6]
