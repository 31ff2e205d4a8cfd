import pytest

from app.core.config import settings
from app.core.thresholds import make_epoch
from app.models.schemas import UpdateEvent, UpdateOp
from app.services.congest_sim import (
    ChannelError,
    CongestSimulator,
    MessageKind,
    MessageSizeError,
    SimMessage,
    SimulationError,
    id_width,
    payload_bits,
)
from app.services.graph_core import DuplicateEdgeError, GraphUpdateError
from app.services.mis_sublinear import SublinearEngine
from app.services.oracle import audit_simulation, check_mis
from app.services.workload import gen_adversary_appendix, gen_random, gen_vertex_mix


@pytest.fixture
def simulator():
    with CongestSimulator(8, parallel=False) as sim:
        yield sim


def _edge(index, op, u, v):
    return UpdateEvent(index=index, op=op, u=u, v=v)


def _assert_healthy(sim):
    assert check_mis(sim.snapshot(), sim.members()) == []
    assert audit_simulation(sim) == []


def test_id_width():
    assert id_width(0) == 4
    assert id_width(16) == 4
    assert id_width(17) == 5
    assert id_width(1000) == 10


def test_payload_bits():
    hello = SimMessage(src=0, dst=1, kind=MessageKind.HELLO, a=3, flags=(True,))
    assert payload_bits(hello, 4) == 4 + 1 + 4
    # Edge counts up to n^2 take a double-width field.
    stamp = SimMessage(src=0, dst=1, kind=MessageKind.TERMINATE_EPOCH, a=200, b=3)
    assert payload_bits(stamp, 4) == 4 + 8 + 4
    with pytest.raises(MessageSizeError):
        payload_bits(SimMessage(src=0, dst=1, kind=MessageKind.HELLO, a=300), 4)


def test_messages_need_a_live_edge(simulator):
    with pytest.raises(ChannelError):
        simulator.network.send([SimMessage(src=0, dst=3, kind=MessageKind.HELLO, a=0)])


def test_conflict_evicts_lower_id(simulator, make_events):
    metrics = [simulator.sim_apply(event) for event in make_events([("+", 2, 1), ("+", 3, 2)])]
    assert metrics[0].removed == [1]
    assert metrics[1].removed == [2]
    assert metrics[1].inserted == [1]
    assert simulator.members() == [0, 1, 3, 4, 5, 6, 7]
    _assert_healthy(simulator)


def test_edge_preconditions(simulator):
    simulator.sim_apply(_edge(0, UpdateOp.EDGE_INSERT, 0, 1))
    with pytest.raises(DuplicateEdgeError):
        simulator.sim_apply(_edge(1, UpdateOp.EDGE_INSERT, 1, 0))
    with pytest.raises(GraphUpdateError):
        simulator.sim_apply(UpdateEvent(index=1, op=UpdateOp.VERTEX_INSERT, u=2))


def test_epoch_flood_along_a_path(path_edges):
    """The flood reaches the far end of a 5-node path after 4 rounds with 4 messages."""
    with CongestSimulator(5) as sim:
        for i, (u, v) in enumerate(path_edges):
            sim.sim_apply(_edge(i, UpdateOp.EDGE_INSERT, u, v))
        sim.serial += 1
        sim.epoch = make_epoch(sim.edge_count)

        assert sim.sim_epoch_broadcast(0) == (4, 4)
        assert all(node.epoch.m_snapshot == 4 for node in sim.nodes)
        _assert_healthy(sim)

        sim.serial += 1
        assert sim.sim_epoch_broadcast(2) == (2, 4)


def test_stale_component_catches_up_when_touched():
    with CongestSimulator(10) as sim:
        events = [
            _edge(0, UpdateOp.EDGE_INSERT, 0, 1),
            _edge(1, UpdateOp.EDGE_INSERT, 2, 3),
            _edge(2, UpdateOp.EDGE_INSERT, 4, 5),
            _edge(3, UpdateOp.EDGE_INSERT, 6, 7),
        ]
        for event in events:
            sim.sim_apply(event)
        # The drift after update 2 was flooded from 4 only.
        assert sim.metrics.epochs == [1, 3]
        assert sim.nodes[4].epoch.m_snapshot == 3
        assert sim.nodes[0].epoch.m_snapshot == 1

        sim.sim_apply(_edge(4, UpdateOp.EDGE_DELETE, 0, 1))
        assert sim.nodes[0].epoch.m_snapshot == 3
        assert sim.nodes[1].epoch.m_snapshot == 3
        _assert_healthy(sim)


def test_vertex_updates(simulator):
    simulator.sim_apply(UpdateEvent(index=0, op=UpdateOp.VERTEX_DELETE, u=2))
    assert 2 not in simulator.members()

    arrival = simulator.sim_apply(UpdateEvent(index=1, op=UpdateOp.VERTEX_INSERT, u=2, attach=(0, 1)))
    assert arrival.inserted == []
    assert simulator.members() == [0, 1, 3, 4, 5, 6, 7]

    departure = simulator.sim_apply(UpdateEvent(index=2, op=UpdateOp.VERTEX_DELETE, u=0))
    assert departure.removed == [0]
    assert simulator.members() == [1, 3, 4, 5, 6, 7]
    _assert_healthy(simulator)

    with pytest.raises(GraphUpdateError):
        simulator.sim_apply(UpdateEvent(index=3, op=UpdateOp.VERTEX_DELETE, u=0))
    with pytest.raises(GraphUpdateError):
        simulator.sim_apply(_edge(3, UpdateOp.EDGE_INSERT, 0, 5))


def test_isolated_arrival_joins(simulator):
    simulator.sim_apply(UpdateEvent(index=0, op=UpdateOp.VERTEX_DELETE, u=5))
    metrics = simulator.sim_apply(UpdateEvent(index=1, op=UpdateOp.VERTEX_INSERT, u=5))
    assert metrics.inserted == [5]
    assert 5 in simulator.members()


def test_matches_sequential_engine():
    """Same stream, same MIS after every update."""
    n = 40
    events = gen_random(n, 800, insert_bias=0.6, seed=13)
    engine = SublinearEngine(n)
    with CongestSimulator(n) as sim:
        for event in events:
            report = engine.apply(event)
            metrics = sim.sim_apply(event)
            assert sorted(metrics.removed) == sorted(report.removed)
            assert sorted(metrics.inserted) == sorted(report.inserted)
            assert sim.members() == engine.members()
        _assert_healthy(sim)
        assert sim.metrics.epochs == [row.m_snapshot for row in engine.ledger.epoch_summaries()]


def test_random_stream_respects_round_and_message_bounds():
    n = 40
    with CongestSimulator(n, strict=True) as sim:
        metrics = sim.sim_run(gen_random(n, 500, insert_bias=0.65, seed=21))
        _assert_healthy(sim)

    assert metrics.round_violations == 0
    assert metrics.invariant_violations == 0
    assert metrics.procedure_overflows == 0
    assert metrics.procedure_violations <= metrics.update_neighbors_calls + metrics.two_hop_calls
    assert metrics.update_neighbors_calls > 0
    assert metrics.max_payload_bits <= 4 * id_width(n)
    assert len(metrics.epochs) > 1
    assert metrics.rounds == sum(update.total_rounds for update in metrics.updates)
    for update in metrics.updates:
        assert update.rounds <= 64 * (1 + update.adjustments)


def test_vertex_mix_stream():
    n = 24
    with CongestSimulator(n) as sim:
        for event in gen_vertex_mix(n, 300, vertex_rate=0.15, seed=6):
            sim.sim_apply(event)
            assert check_mis(sim.snapshot(), sim.members()) == []
        assert audit_simulation(sim) == []


def test_parallel_rounds_match_sequential_rounds():
    events = gen_random(30, 300, seed=17)
    with CongestSimulator(30, parallel=False) as serial_sim:
        serial = serial_sim.sim_run(events)
        serial_members = serial_sim.members()
    with CongestSimulator(30, parallel=True, workers=4) as parallel_sim:
        parallel = parallel_sim.sim_run(events)
        assert parallel_sim.members() == serial_members
    assert (parallel.rounds, parallel.messages) == (serial.rounds, serial.messages)


def test_adversary_stream():
    n = 32
    with CongestSimulator(n) as sim:
        for event in gen_adversary_appendix(n):
            last = sim.sim_apply(event)
        assert last.removed == [8]
        assert sorted(last.inserted) == list(range(8))
        _assert_healthy(sim)


def test_procedure_ceiling_comes_from_settings(monkeypatch, make_events):
    """2 leaving sends 2 status messages, above t_high = 1; a zero slack makes that fatal."""
    monkeypatch.setattr(settings, "sim_neighbor_slack", 0)
    first, second = make_events([("+", 2, 1), ("+", 3, 2)])
    with CongestSimulator(8, strict=True) as sim:
        sim.sim_apply(first)
        with pytest.raises(SimulationError):
            sim.sim_apply(second)
        assert sim.metrics.procedure_overflows >= 1


def _local_view(node):
    return (
        node.mis_flag,
        node.mis_nei,
        node.degree_est,
        node.klass,
        node.own_2hop,
        dict(node.neighbor_degree),
        sorted(node.mis_2hop.zero_keys()),
        node.epoch.m_snapshot,
    )


def test_nodes_never_read_remote_state():
    """Corrupting a node in another component changes nothing the busy nodes see or do."""
    setup = [_edge(i, UpdateOp.EDGE_INSERT, u, u + 1) for i, u in enumerate([6, 7, 8])]
    busy = [
        event.model_copy(update={"index": event.index + len(setup)})
        for event in gen_random(6, 150, insert_bias=0.6, seed=9)
    ]
    with CongestSimulator(10) as clean, CongestSimulator(10) as corrupted:
        for event in setup:
            clean.sim_apply(event)
            corrupted.sim_apply(event)

        remote = corrupted.nodes[7]
        remote.mis_nei += 5
        remote.degree_est = 99
        remote.own_2hop += 3
        remote.neighbor_degree = {x: 42 for x in remote.neighbor_degree}

        for event in busy:
            assert corrupted.sim_apply(event).model_dump() == clean.sim_apply(event).model_dump()
        for v in range(6):
            assert _local_view(corrupted.nodes[v]) == _local_view(clean.nodes[v])
        assert check_mis(clean.snapshot().subgraph(range(6)), [v for v in clean.members() if v < 6]) == []
