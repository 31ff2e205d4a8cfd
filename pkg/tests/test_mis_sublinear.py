import pytest
from hypothesis import given, settings as hypothesis_settings
from hypothesis import strategies as st

from app.models.schemas import DegreeClass, EngineKind, ResolutionCase, UpdateEvent, UpdateOp
from app.services.graph_core import GraphUpdateError
from app.services.mis_delta import DegreeBoundError
from app.services.mis_sublinear import DispatchingEngine, SublinearEngine
from app.services.oracle import audit_invariants, check_mis, check_report_shape
from app.services.workload import gen_adversary_appendix, gen_random, gen_sliding_window


def _assert_healthy(engine):
    assert check_mis(engine.snapshot(), engine.members()) == []
    assert audit_invariants(engine) == []


def _insert(index, u, v):
    return UpdateEvent(index=index, op=UpdateOp.EDGE_INSERT, u=u, v=v)


def test_empty_engine_is_all_members():
    engine = SublinearEngine(5)
    assert engine.members() == [0, 1, 2, 3, 4]
    assert engine.epoch.m_snapshot == 1
    _assert_healthy(engine)


def test_conflict_evicts_lower_id(make_events):
    engine = SublinearEngine(4, strict=True)
    reports = [engine.apply(event) for event in make_events([("+", 2, 1), ("+", 3, 2)])]

    assert reports[0].removed == [1]
    assert reports[0].cases == [ResolutionCase.INSERT_CONFLICT]
    assert reports[1].removed == [2]
    # 1 has no MIS neighbor once 2 leaves.
    assert reports[1].inserted == [1]
    assert engine.members() == [0, 1, 3]
    _assert_healthy(engine)


def test_delete_rejoins_endpoint(make_events):
    engine = SublinearEngine(3, strict=True)
    for event in make_events([("+", 0, 1), ("-", 0, 1)]):
        report = engine.apply(event)
    assert report.inserted == [0]
    assert engine.members() == [0, 1, 2]
    _assert_healthy(engine)


def test_epoch_rebuild_after_drift(make_events):
    engine = SublinearEngine(6, strict=True)
    reports = [engine.apply(event) for event in make_events([("+", 0, 1), ("+", 2, 3), ("+", 4, 5)])]

    assert [report.rebuilt for report in reports] == [False, False, True]
    assert engine.epoch.m_snapshot == 3
    assert engine.epoch.epoch_start_index == 3
    summaries = engine.ledger.epoch_summaries()
    assert [row.m_snapshot for row in summaries] == [1, 3]
    assert summaries[0].updates == 3
    assert summaries[0].rebuild_ops > 0
    _assert_healthy(engine)


def test_rebuild_keeps_members():
    edges = [(0, 1), (1, 2), (2, 3)]
    engine = SublinearEngine.from_edges(4, edges, members=[1, 3], strict=True)
    assert engine.members() == [1, 3]
    engine.rebuild(engine.epoch)
    assert engine.members() == [1, 3]
    _assert_healthy(engine)


def test_fresh_build_uses_ascending_greedy():
    engine = SublinearEngine.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    assert engine.members() == [0, 2]
    assert engine.build_ops > 0


def test_vertex_updates_rejected():
    engine = SublinearEngine(3)
    with pytest.raises(GraphUpdateError):
        engine.apply(UpdateEvent(index=0, op=UpdateOp.VERTEX_INSERT, u=1))


def test_low_neighbors_of_high_vertex_join_through_case_1b():
    """
    Star on 0 with 60 leaves that a second High member 62 also covers. The
    conflict on (0, 1) frees every leaf at once; 62 is swept out afterwards.
    """
    leaves = list(range(2, 62))
    edges = [(0, w) for w in leaves] + [(w, 62) for w in leaves]
    engine = SublinearEngine.from_edges(63, edges, strict=True, manage_epochs=False)
    assert engine.members() == [0, 1, 62]
    assert engine.graph.class_of(0) is DegreeClass.HIGH
    assert engine.graph.class_of(62) is DegreeClass.HIGH
    assert engine.graph.class_of(2) is DegreeClass.LOW

    report = engine.apply(_insert(0, 0, 1))

    assert report.removed == [0, 62]
    assert sorted(report.inserted) == leaves
    assert ResolutionCase.CASE_1B in report.cases
    assert check_report_shape(report) == []
    assert engine.ledger.violations["sweep"] == 0
    _assert_healthy(engine)


def test_many_free_low_neighbors_take_case_2():
    leaves = list(range(2, 302))
    engine = SublinearEngine.from_edges(302, [(0, w) for w in leaves], strict=True, manage_epochs=False)
    t_high = engine.epoch.t_high
    assert len(leaves) + 1 > 4 * t_high

    report = engine.apply(_insert(0, 0, 1))

    assert report.removed == [0]
    assert sorted(report.inserted) == leaves
    assert ResolutionCase.CASE_2 in report.cases
    _assert_healthy(engine)


def test_few_free_low_neighbors_take_case_1a():
    """MedLow 0 with Low leaves 2 and 3; disjoint filler edges fix m at 16."""
    filler = [(x, x + 1) for x in range(4, 32, 2)]
    engine = SublinearEngine.from_edges(32, [(0, 2), (0, 3)] + filler, strict=True, manage_epochs=False)
    assert engine.epoch.m_snapshot == 16
    assert engine.graph.class_of(0) is DegreeClass.MED_LOW
    assert engine.graph.class_of(2) is DegreeClass.LOW

    report = engine.apply(_insert(0, 0, 1))

    assert report.removed == [0]
    assert report.inserted == [2, 3]
    assert report.cases == [ResolutionCase.INSERT_CONFLICT, ResolutionCase.CASE_1A]
    _assert_healthy(engine)


def test_random_stream_keeps_mis_and_invariants():
    engine = SublinearEngine(40)
    for event in gen_random(40, 800, insert_bias=0.6, seed=5):
        report = engine.apply(event)
        assert check_report_shape(report) == []
        _assert_healthy(engine)
    assert len(engine.ledger.epoch_summaries()) > 1
    assert engine.ledger.budget_deficit == 0


def test_sliding_window_stream():
    engine = SublinearEngine(30)
    for event in gen_sliding_window(30, 500, window=60, seed=9):
        engine.apply(event)
    _assert_healthy(engine)


def test_adversary_update_frees_quarter_of_vertices():
    n = 64
    engine = SublinearEngine(n)
    events = gen_adversary_appendix(n)
    for event in events:
        report = engine.apply(event)

    assert report.removed == [16]
    assert sorted(report.inserted) == list(range(16))
    assert report.adjustments >= n // 4
    assert engine.ledger.max_update_adjustments >= n // 4
    _assert_healthy(engine)


@hypothesis_settings(max_examples=50, deadline=None)
@given(steps=st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)), max_size=60))
def test_arbitrary_toggle_sequences(steps):
    """Toggling arbitrary pairs never breaks the MIS or the counters."""
    engine = SublinearEngine(8)
    index = 0
    for u, v in steps:
        if u == v:
            continue
        op = UpdateOp.EDGE_DELETE if engine.graph.has_edge(u, v) else UpdateOp.EDGE_INSERT
        engine.apply(UpdateEvent(index=index, op=op, u=u, v=v))
        index += 1
        _assert_healthy(engine)


# Dispatcher


def test_dispatcher_without_bound_always_sublinear():
    engine = DispatchingEngine(20)
    for event in gen_random(20, 200, seed=1):
        engine.apply(event)
    assert set(engine.served) == {EngineKind.SUBLINEAR}
    _assert_healthy(engine)


def test_dispatcher_switches_with_epoch():
    """A path under degree bound 2: sublinear while t_high < 2, delta afterwards."""
    n = 20
    events = [_insert(i, i, i + 1) for i in range(n - 1)]
    events += [
        UpdateEvent(index=n - 1 + i, op=UpdateOp.EDGE_DELETE, u=i, v=i + 1)
        for i in range(n - 1)
    ]
    engine = DispatchingEngine(n, delta_bound=2)
    assert engine.name is EngineKind.SUBLINEAR

    for event in events:
        engine.apply(event)
        _assert_healthy(engine)

    assert EngineKind.DELTA in engine.served
    assert engine.served[0] is EngineKind.SUBLINEAR
    assert engine.served[-1] is EngineKind.SUBLINEAR
    assert engine.members() == list(range(n))
    epochs = engine.ledger.epoch_summaries()
    assert [row.engine for row in epochs] == engine.served


def test_dispatcher_keeps_members_across_switch():
    engine = DispatchingEngine(8, delta_bound=2)
    for i in range(2):
        engine.apply(_insert(i, i, i + 1))
    before = engine.members()
    engine.apply(_insert(2, 2, 3))
    assert engine.name is EngineKind.DELTA
    # The conflict on (2, 3) is resolved first; the switch keeps the result.
    assert set(before) - {2} <= set(engine.members())
    _assert_healthy(engine)


def test_dispatcher_enforces_bound_under_delta():
    engine = DispatchingEngine(8, delta_bound=2)
    for i in range(3):
        engine.apply(_insert(i, i, i + 1))
    assert engine.name is EngineKind.DELTA
    with pytest.raises(DegreeBoundError):
        engine.apply(_insert(3, 1, 5))
    assert engine.edge_count == 3


def test_dispatcher_enforces_bound_under_sublinear():
    """An insertion past the bound is rejected on the spot, and the later switch to delta succeeds."""
    engine = DispatchingEngine(40, delta_bound=4)
    for i in range(4):
        engine.apply(_insert(i, 0, i + 1))
    assert engine.name is EngineKind.SUBLINEAR

    with pytest.raises(DegreeBoundError):
        engine.apply(_insert(4, 0, 5))
    assert engine.edge_count == 4
    assert not engine.engine.has_edge(0, 5)

    # m reaches 7 > 2 * 3, and t_high = 5 admits the bound.
    for i, u in enumerate([6, 8, 10], start=5):
        engine.apply(_insert(i, u, u + 1))
    assert engine.name is EngineKind.DELTA
    assert engine.served == [EngineKind.SUBLINEAR, EngineKind.SUBLINEAR, EngineKind.DELTA]
    assert engine.epoch.m_snapshot == 7
    assert [row.engine for row in engine.ledger.epoch_summaries()] == engine.served
    _assert_healthy(engine)
