import pytest

from app.models.schemas import UpdateOp
from app.services.workload import (
    StreamFormatError,
    WorkloadParameterError,
    gen_adversary_appendix,
    gen_random,
    gen_sliding_window,
    gen_vertex_mix,
    stream_codec,
)


def _replay_edges(events):
    """Replay edge events into a set, asserting every update is applicable."""
    live = set()
    sizes = []
    for event in events:
        edge = (min(event.u, event.v), max(event.u, event.v))
        assert event.u != event.v
        if event.op is UpdateOp.EDGE_INSERT:
            assert edge not in live
            live.add(edge)
        else:
            assert edge in live
            live.remove(edge)
        sizes.append(len(live))
    return live, sizes


def test_random_stream_is_reproducible():
    first = gen_random(30, 300, seed=42)
    second = gen_random(30, 300, seed=42)
    other = gen_random(30, 300, seed=43)
    assert first == second
    assert first != other
    assert [event.index for event in first] == list(range(300))


def test_random_stream_is_applicable():
    events = gen_random(12, 500, insert_bias=0.8, seed=1)
    live, _ = _replay_edges(events)
    assert len(live) <= 12 * 11 // 2


def test_random_stream_saturates_small_graph():
    """A complete graph forces a deletion even with insert_bias 1."""
    events = gen_random(4, 10, insert_bias=1.0, seed=0)
    _, sizes = _replay_edges(events)
    assert max(sizes) == 6
    assert events[6].op is UpdateOp.EDGE_DELETE


def test_sliding_window_bounds_live_edges():
    events = gen_sliding_window(20, 400, window=25, seed=3)
    _, sizes = _replay_edges(events)
    assert max(sizes) == 25
    # Deletions evict in insertion order.
    inserted = [(e.u, e.v) for e in events if e.op is UpdateOp.EDGE_INSERT]
    deleted = [(e.u, e.v) for e in events if e.op is UpdateOp.EDGE_DELETE]
    assert deleted == inserted[:len(deleted)]


def test_vertex_mix_respects_presence():
    events = gen_vertex_mix(15, 600, vertex_rate=0.2, seed=8)
    present = set(range(15))
    live = set()
    ops = {event.op for event in events}
    assert UpdateOp.VERTEX_INSERT in ops and UpdateOp.VERTEX_DELETE in ops
    for event in events:
        if event.op is UpdateOp.VERTEX_INSERT:
            assert event.u not in present
            assert set(event.attach) <= present
            present.add(event.u)
            live.update((min(event.u, x), max(event.u, x)) for x in event.attach)
        elif event.op is UpdateOp.VERTEX_DELETE:
            assert event.u in present
            present.remove(event.u)
            live = {edge for edge in live if event.u not in edge}
        else:
            assert event.u in present and event.v in present
            edge = (min(event.u, event.v), max(event.u, event.v))
            if event.op is UpdateOp.EDGE_INSERT:
                assert edge not in live
                live.add(edge)
            else:
                live.remove(edge)


def test_adversary_layout():
    n = 64
    q = n // 4
    events = gen_adversary_appendix(n)
    assert len(events) == 2 * q * q + 2 * q * (q - 1) + 1
    assert (events[-1].op, events[-1].u, events[-1].v) == (UpdateOp.EDGE_INSERT, q, 3 * q)
    live, _ = _replay_edges(events)
    assert len(live) == 2 * q + 1


@pytest.mark.parametrize("n", [0, 12, 30])
def test_adversary_rejects_bad_sizes(n):
    with pytest.raises(WorkloadParameterError):
        gen_adversary_appendix(n)


def test_generator_parameter_checks():
    with pytest.raises(WorkloadParameterError):
        gen_random(1, 10)
    with pytest.raises(WorkloadParameterError):
        gen_random(10, 10, insert_bias=1.5)
    with pytest.raises(WorkloadParameterError):
        gen_sliding_window(10, 10, window=0)
    with pytest.raises(WorkloadParameterError):
        gen_vertex_mix(10, 10, vertex_rate=-0.1)


def test_codec_round_trip_with_vertex_ops():
    events = gen_vertex_mix(10, 80, vertex_rate=0.3, seed=5)
    text = stream_codec.dumps(10, events)
    assert text.startswith("N 10\n")
    n, parsed = stream_codec.loads(text)
    assert n == 10
    assert parsed == events


def test_codec_skips_comments_and_blanks():
    text = "# header comes first\nN 4\n\n+ 0 1   # first edge\n+V 3 0 1\n-V 3\n- 0 1\n"
    n, events = stream_codec.loads(text)
    assert n == 4
    assert [event.op for event in events] == [
        UpdateOp.EDGE_INSERT, UpdateOp.VERTEX_INSERT, UpdateOp.VERTEX_DELETE, UpdateOp.EDGE_DELETE,
    ]
    assert events[1].attach == (0, 1)
    assert [event.index for event in events] == [0, 1, 2, 3]


@pytest.mark.parametrize(
    "text, line_number",
    [
        ("+ 0 1\n", 1),
        ("N 4\n+ 0\n", 2),
        ("N 4\n+ 0 1\n* 1 2\n", 3),
        ("N 4\n+ 0 9\n", 2),
        ("N 4\n- a 1\n", 2),
        ("N 4\n-V 1 2\n", 2),
    ],
)
def test_codec_reports_bad_line(text, line_number):
    with pytest.raises(StreamFormatError) as excinfo:
        stream_codec.loads(text)
    assert excinfo.value.line_number == line_number


def test_codec_requires_header():
    with pytest.raises(StreamFormatError):
        stream_codec.loads("# nothing here\n")


def test_codec_file_io(tmp_path):
    events = gen_random(6, 20, seed=4)
    path = tmp_path / "stream.txt"
    stream_codec.write(path, 6, events)
    assert stream_codec.read(path) == (6, events)
