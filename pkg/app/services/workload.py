"""
Update-stream generators and the plain-text stream format.

Stream format, one update per line after a header:

    N <n>
    + u v        insert edge
    - u v        delete edge
    +V u [v ...] insert vertex u with initial neighbors
    -V u         delete vertex u and its edges

Blank lines and '#' comments are ignored. Edge streams start from the empty
graph on n present vertices.
"""
import logging
import random
from collections import deque
from pathlib import Path
from typing import Deque, Dict, List, Optional, Set, Tuple, Union

from app.core.config import settings
from app.models.schemas import UpdateEvent, UpdateOp

logger = logging.getLogger(__name__)

# Random non-edge picks before falling back to enumeration.
_REJECTION_TRIES = 32

_TOKENS = {
    "+": UpdateOp.EDGE_INSERT,
    "-": UpdateOp.EDGE_DELETE,
    "+V": UpdateOp.VERTEX_INSERT,
    "-V": UpdateOp.VERTEX_DELETE,
}
_SYMBOLS = {op: token for token, op in _TOKENS.items()}


class WorkloadParameterError(ValueError):
    """Custom exception for generator parameters outside their domain."""
    pass


class StreamFormatError(Exception):
    """Custom exception for malformed stream text."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EdgePool:
    """Live edges with O(1) insertion, deletion and uniform sampling."""

    def __init__(self):
        self._edges: List[Tuple[int, int]] = []
        self._position: Dict[Tuple[int, int], int] = {}
        self._adjacency: Dict[int, Set[int]] = {}

    def __len__(self) -> int:
        return len(self._edges)

    def __contains__(self, edge: Tuple[int, int]) -> bool:
        return edge in self._position

    def add(self, u: int, v: int) -> None:
        edge = (min(u, v), max(u, v))
        self._position[edge] = len(self._edges)
        self._edges.append(edge)
        self._adjacency.setdefault(u, set()).add(v)
        self._adjacency.setdefault(v, set()).add(u)

    def remove(self, u: int, v: int) -> None:
        edge = (min(u, v), max(u, v))
        i = self._position.pop(edge)
        last = self._edges.pop()
        if last != edge:
            self._edges[i] = last
            self._position[last] = i
        self._adjacency[u].discard(v)
        self._adjacency[v].discard(u)

    def neighbors(self, v: int) -> List[int]:
        return sorted(self._adjacency.get(v, ()))

    def sample(self, rng: random.Random) -> Tuple[int, int]:
        return self._edges[rng.randrange(len(self._edges))]


def _pick_non_edge(rng: random.Random, vertices: List[int], pool: EdgePool) -> Optional[Tuple[int, int]]:
    """Uniform-ish non-edge among `vertices`; None if they form a clique."""
    k = len(vertices)
    if k < 2:
        return None
    for _ in range(_REJECTION_TRIES):
        i = rng.randrange(k)
        j = rng.randrange(k - 1)
        if j >= i:
            j += 1
        u, v = vertices[i], vertices[j]
        edge = (min(u, v), max(u, v))
        if edge not in pool:
            return edge
    ordered = sorted(vertices)
    candidates = [
        (ordered[a], ordered[b])
        for a in range(k)
        for b in range(a + 1, k)
        if (ordered[a], ordered[b]) not in pool
    ]
    return rng.choice(candidates) if candidates else None


def _check_common(n: int, steps: int) -> None:
    if n < 2:
        raise WorkloadParameterError(f"Need at least 2 vertices, got n={n}")
    if steps < 0:
        raise WorkloadParameterError(f"Step count must be non-negative, got {steps}")


def gen_random(
    n: int,
    steps: int,
    insert_bias: Optional[float] = None,
    seed: Optional[int] = None,
) -> List[UpdateEvent]:
    """
    Random edge stream: each step inserts a uniform non-edge with probability
    `insert_bias`, otherwise deletes a uniform live edge. An empty graph
    always inserts and a complete graph always deletes.

    Args:
        n: Vertex count (>= 2)
        steps: Number of updates
        insert_bias: Insertion probability in [0, 1]
        seed: PRNG seed; the same seed reproduces the same stream

    Returns:
        Events indexed 0..steps-1
    """
    bias = settings.insert_bias if insert_bias is None else insert_bias
    _check_common(n, steps)
    if not 0.0 <= bias <= 1.0:
        raise WorkloadParameterError(f"insert_bias must lie in [0, 1], got {bias}")
    rng = random.Random(settings.default_seed if seed is None else seed)
    pool = EdgePool()
    vertices = list(range(n))
    capacity = n * (n - 1) // 2
    events: List[UpdateEvent] = []
    for index in range(steps):
        insert = len(pool) == 0 or (len(pool) < capacity and rng.random() < bias)
        if insert:
            u, v = _pick_non_edge(rng, vertices, pool)
            pool.add(u, v)
            events.append(UpdateEvent(index=index, op=UpdateOp.EDGE_INSERT, u=u, v=v))
        else:
            u, v = pool.sample(rng)
            pool.remove(u, v)
            events.append(UpdateEvent(index=index, op=UpdateOp.EDGE_DELETE, u=u, v=v))
    logger.info(f"Generated {steps} random updates on n={n} (bias={bias}, final m={len(pool)})")
    return events


def gen_sliding_window(
    n: int,
    steps: int,
    window: Optional[int] = None,
    seed: Optional[int] = None,
) -> List[UpdateEvent]:
    """Random insertions; once `window` edges are live the oldest is deleted first."""
    window = settings.sliding_window if window is None else window
    _check_common(n, steps)
    if window < 1:
        raise WorkloadParameterError(f"Window must be positive, got {window}")
    rng = random.Random(settings.default_seed if seed is None else seed)
    pool = EdgePool()
    order: Deque[Tuple[int, int]] = deque()
    vertices = list(range(n))
    capacity = n * (n - 1) // 2
    events: List[UpdateEvent] = []
    for index in range(steps):
        if len(pool) >= min(window, capacity):
            u, v = order.popleft()
            pool.remove(u, v)
            events.append(UpdateEvent(index=index, op=UpdateOp.EDGE_DELETE, u=u, v=v))
        else:
            u, v = _pick_non_edge(rng, vertices, pool)
            pool.add(u, v)
            order.append((u, v))
            events.append(UpdateEvent(index=index, op=UpdateOp.EDGE_INSERT, u=u, v=v))
    return events


def gen_vertex_mix(
    n: int,
    steps: int,
    vertex_rate: Optional[float] = None,
    insert_bias: Optional[float] = None,
    seed: Optional[int] = None,
) -> List[UpdateEvent]:
    """
    Random stream mixing vertex insertions/deletions with edge updates among
    present vertices. All n vertices are present at the start.
    """
    rate = settings.vertex_rate if vertex_rate is None else vertex_rate
    bias = settings.insert_bias if insert_bias is None else insert_bias
    _check_common(n, steps)
    if not 0.0 <= rate <= 1.0:
        raise WorkloadParameterError(f"vertex_rate must lie in [0, 1], got {rate}")
    if not 0.0 <= bias <= 1.0:
        raise WorkloadParameterError(f"insert_bias must lie in [0, 1], got {bias}")
    rng = random.Random(settings.default_seed if seed is None else seed)
    pool = EdgePool()
    present: List[int] = list(range(n))
    absent: List[int] = []
    events: List[UpdateEvent] = []

    def drop(items: List[int], x: int) -> None:
        i = items.index(x)
        items[i] = items[-1]
        items.pop()

    for index in range(steps):
        if rng.random() < rate:
            if absent and (rng.random() < 0.5 or len(present) <= 2):
                u = absent[rng.randrange(len(absent))]
                k = min(len(present), rng.randrange(4))
                attach = tuple(sorted(rng.sample(present, k)))
                drop(absent, u)
                present.append(u)
                for x in attach:
                    pool.add(u, x)
                events.append(UpdateEvent(index=index, op=UpdateOp.VERTEX_INSERT, u=u, attach=attach))
                continue
            if len(present) > 2:
                u = present[rng.randrange(len(present))]
                for x in pool.neighbors(u):
                    pool.remove(u, x)
                drop(present, u)
                absent.append(u)
                events.append(UpdateEvent(index=index, op=UpdateOp.VERTEX_DELETE, u=u))
                continue

        edge = None
        if len(pool) == 0 or rng.random() < bias:
            edge = _pick_non_edge(rng, present, pool)
        if edge is not None:
            pool.add(*edge)
            events.append(UpdateEvent(index=index, op=UpdateOp.EDGE_INSERT, u=edge[0], v=edge[1]))
        else:
            u, v = pool.sample(rng)
            pool.remove(u, v)
            events.append(UpdateEvent(index=index, op=UpdateOp.EDGE_DELETE, u=u, v=v))
    return events


def gen_adversary_appendix(n: int) -> List[UpdateEvent]:
    """
    Stream forcing a single update with at least n/4 adjustments.

    Two complete bipartite graphs R1 x L1 and R2 x L2 are built, every L vertex
    but one per side is detached, and the two survivors are joined. The L
    sides get the higher ids so the lower-id tie-break keeps them in the MIS;
    the final edge evicts the L1 survivor and frees all of R1.

    Args:
        n: Vertex count, a positive multiple of 8

    Returns:
        2*(n/4)^2 + 2*(n/4)*(n/4 - 1) + 1 events
    """
    if n <= 0 or n % 8:
        raise WorkloadParameterError(f"Adversary streams need n divisible by 8, got {n}")
    q = n // 4
    r1, l1, r2, l2 = (list(range(i * q, (i + 1) * q)) for i in range(4))
    updates: List[Tuple[UpdateOp, int, int]] = []
    for right, left in ((r1, l1), (r2, l2)):
        updates.extend((UpdateOp.EDGE_INSERT, r, l) for r in right for l in left)
    for right, left in ((r1, l1), (r2, l2)):
        updates.extend((UpdateOp.EDGE_DELETE, r, l) for l in left[1:] for r in right)
    updates.append((UpdateOp.EDGE_INSERT, l1[0], l2[0]))
    return [UpdateEvent(index=i, op=op, u=u, v=v) for i, (op, u, v) in enumerate(updates)]


class StreamCodec:
    """Reads and writes the plain-text stream format."""

    def dumps(self, n: int, events: List[UpdateEvent]) -> str:
        lines = [f"N {n}"]
        for event in events:
            token = _SYMBOLS[event.op]
            if event.op is UpdateOp.VERTEX_INSERT:
                lines.append(" ".join([token, str(event.u), *map(str, event.attach)]))
            elif event.op is UpdateOp.VERTEX_DELETE:
                lines.append(f"{token} {event.u}")
            else:
                lines.append(f"{token} {event.u} {event.v}")
        return "\n".join(lines) + "\n"

    def loads(self, text: str) -> Tuple[int, List[UpdateEvent]]:
        """
        Parse stream text.

        Returns:
            (n, events) with events indexed in file order

        Raises:
            StreamFormatError: on the first malformed line
        """
        n: Optional[int] = None
        events: List[UpdateEvent] = []
        for line_number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if n is None:
                if len(tokens) != 2 or tokens[0] != "N":
                    raise StreamFormatError(line_number, f"expected header 'N <n>', got {line!r}")
                n = self._parse_id(tokens[1], line_number, None)
                continue

            op = _TOKENS.get(tokens[0])
            if op is None:
                raise StreamFormatError(line_number, f"unknown operation {tokens[0]!r}")
            ids = [self._parse_id(token, line_number, n) for token in tokens[1:]]
            index = len(events)
            if op in (UpdateOp.EDGE_INSERT, UpdateOp.EDGE_DELETE):
                if len(ids) != 2:
                    raise StreamFormatError(line_number, f"{tokens[0]} takes two vertices")
                events.append(UpdateEvent(index=index, op=op, u=ids[0], v=ids[1]))
            elif op is UpdateOp.VERTEX_DELETE:
                if len(ids) != 1:
                    raise StreamFormatError(line_number, "-V takes one vertex")
                events.append(UpdateEvent(index=index, op=op, u=ids[0]))
            else:
                if not ids:
                    raise StreamFormatError(line_number, "+V needs a vertex")
                events.append(UpdateEvent(index=index, op=op, u=ids[0], attach=tuple(ids[1:])))

        if n is None:
            raise StreamFormatError(0, "missing header 'N <n>'")
        return n, events

    @staticmethod
    def _parse_id(token: str, line_number: int, n: Optional[int]) -> int:
        if not token.isdigit():
            raise StreamFormatError(line_number, f"{token!r} is not a non-negative integer")
        value = int(token)
        if n is not None and value >= n:
            raise StreamFormatError(line_number, f"vertex {value} is outside [0, {n})")
        return value

    def read(self, path: Union[str, Path]) -> Tuple[int, List[UpdateEvent]]:
        text = Path(path).read_text(encoding="utf-8")
        n, events = self.loads(text)
        logger.info(f"Read {len(events)} updates for n={n} from {path}")
        return n, events

    def write(self, path: Union[str, Path], n: int, events: List[UpdateEvent]) -> None:
        Path(path).write_text(self.dumps(n, events), encoding="utf-8")
        logger.info(f"Wrote {len(events)} updates for n={n} to {path}")


# Global codec instance
stream_codec = StreamCodec()
