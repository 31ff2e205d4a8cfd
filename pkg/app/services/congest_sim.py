"""
Synchronous message-passing simulation of the sublinear MIS engine.

Each processor (SimNode) reads only its own state and inbox, and hands
outgoing messages back to the network; the network delivers them one round
at a time along live edges, enforces the payload bit budget and tallies
rounds and messages per phase and per procedure invocation. The driver
(CongestSimulator) plays the environment: it applies topology changes,
notifies the affected nodes and runs the node-side protocol coroutines.
"""
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Deque, Dict, Generator, List, Optional, Sequence, Set, Tuple

import networkx as nx

from app.core.config import settings
from app.core.thresholds import classify, epoch_expired, make_epoch
from app.models.schemas import EpochConfig, SimMetrics, SimUpdateMetrics, UpdateEvent, UpdateOp
from app.services.graph_core import (
    HIGH,
    LOW,
    LOW_SIDE,
    MED_HIGH,
    NON_LOW,
    ClassedNeighbors,
    DuplicateEdgeError,
    GraphUpdateError,
    MissingEdgeError,
    SelfLoopError,
    TwoHopTable,
    VertexRangeError,
    counts_toward,
)

logger = logging.getLogger(__name__)

TAG_BITS = 4
MIN_ID_WIDTH = 4


class SimulationError(Exception):
    """Custom exception for protocol states the simulator must never reach."""
    pass


class ChannelError(SimulationError):
    """Custom exception for messages sent between non-adjacent nodes."""
    pass


class MessageSizeError(SimulationError):
    """Custom exception for payloads above the bit budget."""
    pass


class MessageKind(IntEnum):
    HELLO = 0
    GOODBYE = 1
    DEGREE_ANNOUNCE = 2
    STATUS_CHANGE = 3
    RELAY_STATUS = 4
    TWO_HOP_SET = 5
    STATUS_QUERY = 6
    STATUS_REPLY = 7
    JOIN_GRANT = 8
    NEIGHBOR_SCAN = 9
    SCAN_REPORT = 10
    SWEEP_REQUEST = 11
    VIOLATION_REPORT = 12
    REMOVE_ORDER = 13
    TERMINATE_EPOCH = 14
    REBUILD_ANNOUNCE = 15


class Purpose(IntEnum):
    """Why a STATUS_QUERY was sent; echoed in the reply."""
    COORDINATOR = 0
    RECOMPUTE = 1
    SCAN = 2
    SWEEP = 3


class Phase(str, Enum):
    MAINTENANCE = "maintenance"
    RESOLUTION = "resolution"
    BROADCAST = "broadcast"


class Procedure(str, Enum):
    UPDATE_NEIGHBORS = "update_neighbors"
    UPDATE_TWO_HOP = "update_two_hop"


Trace = Tuple[Procedure, int, int]


@dataclass(frozen=True, slots=True)
class SimMessage:
    src: int
    dst: int
    kind: MessageKind
    a: Optional[int] = None
    b: Optional[int] = None
    flags: Tuple[bool, ...] = ()
    trace: Optional[Trace] = None  # accounting only, not part of the payload


def id_width(n: int) -> int:
    """Bits per id field: max(4, ceil(log2 n))."""
    return max(MIN_ID_WIDTH, (n - 1).bit_length() if n > 1 else 0)


def payload_bits(message: SimMessage, width: int) -> int:
    """
    Encoded payload size: a 4-bit tag, one bit per flag, and `width` bits per
    integer field (2*width for values up to n^2, such as edge counts).
    """
    bits = TAG_BITS + len(message.flags)
    for value in (message.a, message.b):
        if value is None:
            continue
        if value < 0:
            raise MessageSizeError(f"Negative field in {message.kind.name}")
        if value < 1 << width:
            bits += width
        elif value < 1 << (2 * width):
            bits += 2 * width
        else:
            raise MessageSizeError(f"Field {value} of {message.kind.name} does not fit in {2 * width} bits")
    return bits


@dataclass
class NodeSinks:
    """Output ports shared by all nodes: MIS membership changes and flood receipts."""
    outputs: List[Tuple[int, int, bool]] = field(default_factory=list)  # (clock, node, joined)
    flooded: List[int] = field(default_factory=list)


Coroutine = Generator[List[SimMessage], None, object]


class SimNode:
    """One processor: its local view of the graph, the MIS counters and protocol state."""

    def __init__(self, vid: int, width: int, epoch: EpochConfig, sinks: NodeSinks):
        self.id = vid
        self.width = width
        self.sinks = sinks
        self.present = True
        self.epoch = epoch
        self.epoch_serial = 0
        self.clock = 0
        self.informed_round = 0
        self.inbox: List[SimMessage] = []
        self._reset_state()
        self.mis_flag = True

    def _reset_state(self) -> None:
        self.neighbors = ClassedNeighbors()
        self.neighbor_degree: Dict[int, int] = {}
        self.degree_est = 0
        self.klass = LOW
        self.mis_flag = False
        self.mis_nei = 0
        self.own_2hop = 0
        self.mis_2hop = TwoHopTable()
        self._replies: List[SimMessage] = []
        self._partner_in_mis: Dict[int, bool] = {}
        self._new_links: List[int] = []
        self._dirty = False
        self._recompute_due = False
        self._recompute: Optional[Dict[int, bool]] = None
        self._scan: Optional[List] = None
        self._sweep: Optional[List] = None
        self._rebuild: Optional[Dict[int, Tuple[int, bool]]] = None
        self.flood_pending = False
        self._seq = 0

    # Helpers

    def _msg(self, dst: int, kind: MessageKind, a=None, b=None, flags=(), trace=None) -> SimMessage:
        return SimMessage(src=self.id, dst=dst, kind=kind, a=a, b=b, flags=flags, trace=trace)

    def _trace(self, procedure: Procedure) -> Trace:
        self._seq += 1
        return (procedure, self.id, self._seq)

    def _take(self, kind: MessageKind) -> List[SimMessage]:
        taken = [m for m in self._replies if m.kind is kind]
        self._replies = [m for m in self._replies if m.kind is not kind]
        return taken

    def _set_table(self, targets: Sequence[int], trace: Optional[Trace] = None) -> List[SimMessage]:
        return [self._msg(x, MessageKind.TWO_HOP_SET, a=self.id, b=self.own_2hop, trace=trace) for x in targets]

    # Membership

    def set_membership(self, joined: bool) -> List[SimMessage]:
        """Join or leave the MIS and run UpdateNeighbors / UpdateTwoHopNeighbors."""
        self.mis_flag = joined
        self.sinks.outputs.append((self.clock, self.id, joined))
        out: List[SimMessage] = []
        trace = self._trace(Procedure.UPDATE_NEIGHBORS)
        targets = self.neighbors.in_class(*NON_LOW) if self.klass is HIGH else self.neighbors
        out.extend(self._msg(x, MessageKind.STATUS_CHANGE, flags=(joined,), trace=trace) for x in targets)
        if self.klass in LOW_SIDE:
            trace = self._trace(Procedure.UPDATE_TWO_HOP)
            out.extend(
                self._msg(w, MessageKind.RELAY_STATUS, a=self.id, flags=(joined,), trace=trace)
                for w in self.neighbors.in_class(LOW)
            )
        return out

    # Topology notices from the environment

    def _refresh(self, new_degree: int, skip: Optional[int]) -> List[SimMessage]:
        est = self.degree_est
        if not (new_degree > 2 * est or 2 * new_degree < est):
            return []
        self.degree_est = new_degree
        new = classify(new_degree, self.epoch)
        if new is not self.klass:
            self.klass = new
            self._recompute_due = True
        return [
            self._msg(x, MessageKind.DEGREE_ANNOUNCE, a=new_degree, flags=(self.mis_flag,))
            for x in self.neighbors if x != skip
        ]

    def begin_link(self, x: int) -> List[SimMessage]:
        announces = self._refresh(len(self.neighbors) + 1, skip=None)
        hello = self._msg(x, MessageKind.HELLO, a=self.degree_est, flags=(self.mis_flag,))
        return [hello] + announces

    def begin_unlink(self, x: int) -> List[SimMessage]:
        goodbye = self._msg(x, MessageKind.GOODBYE, flags=(self.mis_flag,))
        return [goodbye] + self._refresh(len(self.neighbors) - 1, skip=x)

    def arrive(self, attach: Sequence[int], serial: int, m_snapshot: int) -> List[SimMessage]:
        """Become present with the given initial neighbors, outside the MIS."""
        self._reset_state()
        self.present = True
        self.epoch = make_epoch(m_snapshot)
        self.epoch_serial = serial
        self.degree_est = len(attach)
        self.klass = classify(self.degree_est, self.epoch)
        return [self._msg(s, MessageKind.HELLO, a=self.degree_est, flags=(False,)) for s in attach]

    def depart(self) -> List[SimMessage]:
        out = [self._msg(x, MessageKind.GOODBYE, flags=(self.mis_flag,)) for x in self.neighbors]
        self._reset_state()
        self.present = False
        return out

    def yields_to(self, partner: int) -> bool:
        """Both endpoints of a new edge are in the MIS and this one has the lower id."""
        return self.mis_flag and self._partner_in_mis.get(partner, False) and self.id < partner

    # Epochs

    def is_current(self, serial: int, m_snapshot: int) -> bool:
        return serial == self.epoch_serial and m_snapshot == self.epoch.m_snapshot

    def _adopt(self, serial: int, m_snapshot: int, clock: int) -> None:
        self.epoch = make_epoch(m_snapshot)
        self.epoch_serial = serial
        self.flood_pending = True
        self.informed_round = clock
        self.sinks.flooded.append(self.id)

    def catch_up(self, serial: int, m_snapshot: int, clock: int) -> List[SimMessage]:
        """Adopt the stamped epoch and start flooding it through the component."""
        if self.is_current(serial, m_snapshot):
            return []
        self._adopt(serial, m_snapshot, clock)
        return [self._msg(x, MessageKind.TERMINATE_EPOCH, a=m_snapshot, b=serial) for x in self.neighbors]

    def begin_rebuild(self) -> List[SimMessage]:
        if not self.flood_pending:
            return []
        self.flood_pending = False
        self.degree_est = len(self.neighbors)
        self.klass = classify(self.degree_est, self.epoch)
        self.mis_2hop = TwoHopTable()
        if not self.neighbors:
            self.mis_nei = 0
            self.own_2hop = 0
            return []
        self._rebuild = {}
        return [
            self._msg(x, MessageKind.REBUILD_ANNOUNCE, a=self.degree_est, flags=(self.mis_flag,))
            for x in self.neighbors
        ]

    def _finish_rebuild(self) -> List[SimMessage]:
        data, self._rebuild = self._rebuild, None
        order = list(self.neighbors)
        self.neighbors = ClassedNeighbors()
        self.neighbor_degree = {}
        self.mis_nei = 0
        self.own_2hop = 0
        for x in order:
            est, in_mis = data[x]
            cls = classify(est, self.epoch)
            self.neighbors.add(x, cls)
            self.neighbor_degree[x] = est
            if in_mis:
                self.mis_nei += counts_toward(self.klass, cls)
                self.own_2hop += cls in LOW_SIDE
        return self._set_table(order) if self.klass is LOW else []

    # Round processing

    def step(self, clock: int) -> List[SimMessage]:
        """Process the whole inbox of this round and return the messages to send."""
        self.clock = clock
        inbox, self.inbox = self.inbox, []
        if not self.present:
            return []
        out: List[SimMessage] = []
        for message in inbox:
            out.extend(self._handle(message))
        out.extend(self._after_step())
        return out

    def _after_step(self) -> List[SimMessage]:
        out: List[SimMessage] = []
        if self._recompute_due:
            self._recompute_due = False
            if self.neighbors:
                self._recompute = {}
                out = [
                    self._msg(x, MessageKind.STATUS_QUERY, b=Purpose.RECOMPUTE)
                    for x in self.neighbors
                ]
            else:
                self.mis_nei = 0
                self.own_2hop = 0
        elif self._recompute is None and self.klass is LOW:
            if self._dirty:
                out = self._set_table(list(self.neighbors))
            elif self._new_links:
                out = self._set_table([x for x in self._new_links if x in self.neighbors])
        self._dirty = False
        self._new_links = []
        return out

    def _handle(self, message: SimMessage) -> List[SimMessage]:
        kind = message.kind
        x = message.src

        if kind is MessageKind.STATUS_CHANGE:
            delta = 1 if message.flags[0] else -1
            cls = self.neighbors.class_of(x)
            if counts_toward(self.klass, cls):
                self.mis_nei += delta
            if cls in LOW_SIDE:
                self.own_2hop += delta
            return []

        if kind is MessageKind.RELAY_STATUS:
            return self._set_table(list(self.neighbors), trace=message.trace)

        if kind is MessageKind.TWO_HOP_SET:
            key = message.a
            if key in self.neighbors and self.neighbors.class_of(key) is LOW:
                self.mis_2hop.create(key, message.b)
            return []

        if kind is MessageKind.STATUS_QUERY:
            return [self._msg(
                x, MessageKind.STATUS_REPLY, b=message.b, flags=(self.mis_flag, self.mis_nei == 0),
            )]

        if kind is MessageKind.STATUS_REPLY:
            return self._on_reply(message)

        if kind is MessageKind.HELLO:
            cls = classify(message.a, self.epoch)
            self.neighbors.add(x, cls)
            self.neighbor_degree[x] = message.a
            in_mis = message.flags[0]
            self._partner_in_mis[x] = in_mis
            if in_mis:
                self.mis_nei += counts_toward(self.klass, cls)
                if cls in LOW_SIDE:
                    self.own_2hop += 1
                    self._dirty = True
            self._new_links.append(x)
            return []

        if kind is MessageKind.GOODBYE:
            if x not in self.neighbors:
                return []
            in_mis = message.flags[0]
            cls = self.neighbors.remove(x)
            del self.neighbor_degree[x]
            self.mis_2hop.retire(x)
            self._partner_in_mis[x] = in_mis
            if in_mis:
                self.mis_nei -= counts_toward(self.klass, cls)
                if cls in LOW_SIDE:
                    self.own_2hop -= 1
                    self._dirty = True
            return []

        if kind is MessageKind.DEGREE_ANNOUNCE:
            if x not in self.neighbors:
                return []
            self.neighbor_degree[x] = message.a
            old = self.neighbors.class_of(x)
            new = classify(message.a, self.epoch)
            if old is new:
                return []
            self.neighbors.move(x, new)
            if message.flags[0]:
                self.mis_nei += counts_toward(self.klass, new) - counts_toward(self.klass, old)
                shift = (new in LOW_SIDE) - (old in LOW_SIDE)
                if shift:
                    self.own_2hop += shift
                    self._dirty = True
            if old is LOW:
                self.mis_2hop.retire(x)
            return []

        if kind is MessageKind.JOIN_GRANT:
            return self.set_membership(True)

        if kind is MessageKind.REMOVE_ORDER:
            if message.a == self.id:
                return self.set_membership(False)
            return [self._msg(message.a, MessageKind.REMOVE_ORDER, a=message.a)]

        if kind is MessageKind.NEIGHBOR_SCAN:
            self._scan = [x, len(self.neighbors), False]
            return [self._msg(y, MessageKind.STATUS_QUERY, b=Purpose.SCAN) for y in self.neighbors]

        if kind is MessageKind.SWEEP_REQUEST:
            classes = (HIGH,) if message.a == 1 else (HIGH, MED_HIGH)
            targets = list(self.neighbors.in_class(*classes))
            if targets:
                self._sweep = [x, len(targets)]
            return [self._msg(h, MessageKind.STATUS_QUERY, b=Purpose.SWEEP) for h in targets]

        if kind in (MessageKind.SCAN_REPORT, MessageKind.VIOLATION_REPORT):
            self._replies.append(message)
            return []

        if kind is MessageKind.TERMINATE_EPOCH:
            if self.flood_pending or self.is_current(message.b, message.a):
                return []
            self._adopt(message.b, message.a, self.clock)
            return [
                self._msg(y, MessageKind.TERMINATE_EPOCH, a=message.a, b=message.b)
                for y in self.neighbors if y != x
            ]

        if kind is MessageKind.REBUILD_ANNOUNCE:
            if self._rebuild is None:
                raise SimulationError(f"Node {self.id} got a rebuild announce outside a rebuild")
            self._rebuild[x] = (message.a, message.flags[0])
            if len(self._rebuild) == len(self.neighbors):
                return self._finish_rebuild()
            return []

        raise SimulationError(f"Node {self.id} cannot handle {kind.name}")

    def _on_reply(self, message: SimMessage) -> List[SimMessage]:
        purpose = message.b
        in_mis, free = message.flags
        if purpose == Purpose.COORDINATOR:
            self._replies.append(message)
            return []

        if purpose == Purpose.RECOMPUTE:
            self._recompute[message.src] = in_mis
            if len(self._recompute) < len(self.neighbors):
                return []
            statuses, self._recompute = self._recompute, None
            self.mis_nei = 0
            self.own_2hop = 0
            for y, member in statuses.items():
                if member:
                    cls = self.neighbors.class_of(y)
                    self.mis_nei += counts_toward(self.klass, cls)
                    self.own_2hop += cls in LOW_SIDE
            return self._set_table(list(self.neighbors)) if self.klass is LOW else []

        if purpose == Purpose.SCAN:
            self._scan[1] -= 1
            self._scan[2] = self._scan[2] or in_mis
            if self._scan[1]:
                return []
            coordinator, _, has_member = self._scan
            self._scan = None
            return [self._msg(coordinator, MessageKind.SCAN_REPORT, flags=(has_member,))]

        # Sweep: report members that gained an MIS neighbor.
        coordinator = self._sweep[0]
        self._sweep[1] -= 1
        if not self._sweep[1]:
            self._sweep = None
        if in_mis and not free:
            return [self._msg(coordinator, MessageKind.VIOLATION_REPORT, a=message.src)]
        return []

    # Protocol coroutines, driven round-trip by round-trip by the simulator

    def _query(self, targets: Sequence[int]) -> Generator[List[SimMessage], None, Dict[int, Tuple[bool, ...]]]:
        yield [self._msg(x, MessageKind.STATUS_QUERY, b=Purpose.COORDINATOR) for x in targets]
        return {m.src: m.flags for m in self._take(MessageKind.STATUS_REPLY)}

    def _grant_loop(self, candidates: List[int]) -> Generator[List[SimMessage], None, List[int]]:
        """Grant membership to free candidates in ascending order, one at a time."""
        joined: List[int] = []
        remaining = candidates
        while remaining:
            status = yield from self._query(remaining)
            free = [x for x in remaining if not status[x][0] and status[x][1]]
            if not free:
                break
            yield [self._msg(free[0], MessageKind.JOIN_GRANT)]
            joined.append(free[0])
            remaining = free[1:]
        return joined

    def _sweep_from(self, joined: List[int], mask: int) -> Generator[List[SimMessage], None, List[int]]:
        if not joined:
            return []
        yield [self._msg(j, MessageKind.SWEEP_REQUEST, a=mask) for j in joined]
        relay: Dict[int, int] = {}
        for report in self._take(MessageKind.VIOLATION_REPORT):
            relay[report.a] = min(relay.get(report.a, report.src), report.src)
        marked = sorted(relay)
        if marked:
            yield [self._msg(relay[h], MessageKind.REMOVE_ORDER, a=h) for h in marked]
        return marked

    def coordinate(self) -> Generator[List[SimMessage], None, List[int]]:
        """
        Repair around this node after it left the MIS.

        Returns:
            Nodes swept out of the MIS, ascending, to be repaired next
        """
        yield from self._grant_loop(sorted(self.neighbors.in_class(*NON_LOW)))
        l_2hop = sorted(self.mis_2hop.zero_keys())
        if not l_2hop:
            return []
        epoch = self.epoch
        if len(l_2hop) > 4 * epoch.t_high:
            joined = yield from self._grant_loop(l_2hop)
            return (yield from self._sweep_from(joined, 2))

        status = yield from self._query(l_2hop)
        l_1hop = [w for w in l_2hop if status[w][1]]
        if len(l_1hop) > 4 * epoch.t_medhigh:
            joined = yield from self._grant_loop(l_1hop)
            return (yield from self._sweep_from(joined, 1))
        if not l_1hop:
            return []

        yield [self._msg(w, MessageKind.NEIGHBOR_SCAN) for w in l_1hop]
        reports = {m.src: m.flags[0] for m in self._take(MessageKind.SCAN_REPORT)}
        yield from self._grant_loop([w for w in l_1hop if not reports[w]])
        return []

    def resolve_lost_partner(self, partner: int) -> Generator[List[SimMessage], None, None]:
        """After an edge deletion: join if the departed neighbor was our only MIS neighbor."""
        if self.mis_flag or not self._partner_in_mis.get(partner, False) or self.mis_nei != 0:
            return
        if self.klass is not LOW:
            yield self.set_membership(True)
            return
        status = yield from self._query(list(self.neighbors))
        if not any(flags[0] for flags in status.values()):
            yield self.set_membership(True)

    def decide_on_arrival(self) -> Generator[List[SimMessage], None, None]:
        if self.klass is not LOW:
            if self.mis_nei == 0:
                yield self.set_membership(True)
            return
        status = yield from self._query(list(self.neighbors))
        if not any(flags[0] for flags in status.values()):
            yield self.set_membership(True)


class RoundNetwork:
    """Delivers messages in synchronous rounds and keeps the books."""

    def __init__(self, nodes: List[SimNode], width: int, channel_open, parallel: bool, workers: int):
        self.nodes = nodes
        self.width = width
        self.bit_budget = settings.payload_bits_constant * width
        self.channel_open = channel_open
        self.round = 0
        self.phase = Phase.MAINTENANCE
        self.max_payload_bits = 0
        self._pending: List[SimMessage] = []
        self._executor = ThreadPoolExecutor(max_workers=workers) if parallel else None
        self.reset_update()

    def reset_update(self) -> None:
        self.phase_rounds: Dict[Phase, int] = {phase: 0 for phase in Phase}
        self.phase_messages: Dict[Phase, int] = {phase: 0 for phase in Phase}
        self.trace_stats: Dict[Trace, List] = {}

    def send(self, messages: Sequence[SimMessage]) -> None:
        for message in messages:
            if not self.channel_open(message.src, message.dst):
                raise ChannelError(f"No channel from {message.src} to {message.dst} for {message.kind.name}")
            bits = payload_bits(message, self.width)
            if bits > self.bit_budget:
                raise MessageSizeError(f"{message.kind.name} needs {bits} bits, budget {self.bit_budget}")
            self.max_payload_bits = max(self.max_payload_bits, bits)
            self._pending.append(message)

    def run_until_quiet(self) -> int:
        rounds = 0
        while self._pending:
            rounds += 1
            self.round += 1
            batch, self._pending = self._pending, []
            self.phase_rounds[self.phase] += 1
            self.phase_messages[self.phase] += len(batch)
            receivers = []
            for message in batch:
                node = self.nodes[message.dst]
                if not node.inbox:
                    receivers.append(message.dst)
                node.inbox.append(message)
                if message.trace is not None:
                    stats = self.trace_stats.setdefault(message.trace, [0, set()])
                    stats[0] += 1
                    stats[1].add(self.round)
            receivers.sort()
            if self._executor is not None:
                outputs = list(self._executor.map(self._step, receivers))
            else:
                outputs = [self._step(v) for v in receivers]
            for out in outputs:
                self.send(out)
        return rounds

    def _step(self, v: int) -> List[SimMessage]:
        return self.nodes[v].step(self.round)

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None


class CongestSimulator:
    """
    Environment and driver for the simulated network.

    Args:
        n: Number of vertex slots, all present and isolated at the start
        parallel: Step the nodes of a round on a thread pool
        workers: Thread pool size
        strict: Raise on broken per-update shape or round bounds
    """

    def __init__(
        self,
        n: int,
        parallel: Optional[bool] = None,
        workers: Optional[int] = None,
        strict: Optional[bool] = None,
    ):
        if n < 0:
            raise ValueError(f"Vertex count must be non-negative, got {n}")
        self.n = n
        self.width = id_width(n)
        self.strict = settings.strict_invariants if strict is None else strict
        self.epoch = make_epoch(0)
        self.serial = 0
        self.sinks = NodeSinks()
        self.nodes = [SimNode(v, self.width, self.epoch, self.sinks) for v in range(n)]
        self.adjacency: List[Set[int]] = [set() for _ in range(n)]
        self.present = [True] * n
        self.edge_count = 0
        self._grace: Set[Tuple[int, int]] = set()
        self.network = RoundNetwork(
            self.nodes,
            self.width,
            self._channel_open,
            settings.parallel_rounds if parallel is None else parallel,
            workers or settings.sim_workers,
        )
        self.metrics = SimMetrics(epochs=[self.epoch.m_snapshot])
        self._queue: Deque[int] = deque()

    def __enter__(self) -> "CongestSimulator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        self.network.close()

    # Environment view

    def _channel_open(self, u: int, v: int) -> bool:
        return v in self.adjacency[u] or (min(u, v), max(u, v)) in self._grace

    def members(self) -> List[int]:
        return [v for v in range(self.n) if self.present[v] and self.nodes[v].mis_flag]

    def edges(self) -> List[Tuple[int, int]]:
        return sorted((u, v) for u in range(self.n) for v in self.adjacency[u] if u < v)

    def snapshot(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(v for v in range(self.n) if self.present[v])
        graph.add_edges_from(self.edges())
        return graph

    @property
    def serial_field(self) -> int:
        return self.serial % (1 << self.width)

    # Driving

    def _run(self, messages: Sequence[SimMessage]) -> None:
        self.network.send(messages)
        self.network.run_until_quiet()

    def _drive(self, coroutine: Coroutine):
        try:
            batch = next(coroutine)
            while True:
                self._run(batch)
                batch = coroutine.send(None)
        except StopIteration as stop:
            return stop.value

    def _evict(self, coordinator: int) -> None:
        """Take `coordinator` out of the MIS and drain the repair queue it starts."""
        self._run(self.nodes[coordinator].set_membership(False))
        self._queue.append(coordinator)
        limit = settings.drain_guard_factor * (self.n + 1)
        steps = 0
        while self._queue:
            steps += 1
            if steps > limit:
                self._queue.clear()
                raise SimulationError(f"Repair queue did not drain within {limit} steps")
            marked = self._drive(self.nodes[self._queue.popleft()].coordinate())
            self._queue.extend(marked)

    def sim_epoch_broadcast(self, initiator: int) -> Tuple[int, int]:
        """
        Flood the current epoch stamp from `initiator` through its component,
        then rebuild the component's estimates and counters.

        Returns:
            (rounds until every node of the component was informed, flood messages)
        """
        network = self.network
        previous = network.phase
        network.phase = Phase.BROADCAST
        start_round = network.round
        start_messages = network.phase_messages[Phase.BROADCAST]
        self._run(self.nodes[initiator].catch_up(self.serial_field, self.epoch.m_snapshot, start_round))
        flooded = sorted(self.sinks.flooded)
        self.sinks.flooded.clear()
        rounds = max((self.nodes[v].informed_round - start_round for v in flooded), default=0)
        messages = network.phase_messages[Phase.BROADCAST] - start_messages

        batch: List[SimMessage] = []
        for v in flooded:
            batch.extend(self.nodes[v].begin_rebuild())
        self._run(batch)
        network.phase = previous
        logger.debug(f"Epoch flood from {initiator} reached {len(flooded)} nodes in {rounds} rounds")
        return rounds, messages

    def _catch_up(self, participants: Sequence[int]) -> None:
        for p in sorted(set(participants)):
            if self.present[p] and not self.nodes[p].is_current(self.serial_field, self.epoch.m_snapshot):
                self.sim_epoch_broadcast(p)

    def _validate(self, event: UpdateEvent) -> None:
        ids = [event.u] + ([event.v] if event.v is not None else []) + list(event.attach)
        for x in ids:
            if not 0 <= x < self.n:
                raise VertexRangeError(f"Update {event.index}: vertex {x} is outside [0, {self.n})")
        op = event.op
        if op in (UpdateOp.EDGE_INSERT, UpdateOp.EDGE_DELETE):
            u, v = event.u, event.v
            if u == v:
                raise SelfLoopError(f"Update {event.index}: self-loop at {u}")
            if not (self.present[u] and self.present[v]):
                raise GraphUpdateError(f"Update {event.index}: edge ({u}, {v}) touches an absent vertex")
            if op is UpdateOp.EDGE_INSERT and v in self.adjacency[u]:
                raise DuplicateEdgeError(f"Update {event.index}: edge ({u}, {v}) is already live")
            if op is UpdateOp.EDGE_DELETE and v not in self.adjacency[u]:
                raise MissingEdgeError(f"Update {event.index}: edge ({u}, {v}) is not live")
        elif op is UpdateOp.VERTEX_INSERT:
            if self.present[event.u]:
                raise GraphUpdateError(f"Update {event.index}: vertex {event.u} is already present")
            if len(set(event.attach)) != len(event.attach) or event.u in event.attach:
                raise GraphUpdateError(f"Update {event.index}: bad neighbor list for vertex {event.u}")
            if not all(self.present[x] for x in event.attach):
                raise GraphUpdateError(f"Update {event.index}: vertex {event.u} attaches to an absent vertex")
        elif not self.present[event.u]:
            raise GraphUpdateError(f"Update {event.index}: vertex {event.u} is not present")

    def _link(self, u: int, v: int) -> None:
        self.adjacency[u].add(v)
        self.adjacency[v].add(u)
        self.edge_count += 1

    def _unlink(self, u: int, v: int) -> None:
        self.adjacency[u].discard(v)
        self.adjacency[v].discard(u)
        self._grace.add((min(u, v), max(u, v)))
        self.edge_count -= 1

    def sim_apply(self, event: UpdateEvent) -> SimUpdateMetrics:
        """
        Apply one update to the simulated network.

        Args:
            event: Edge or vertex update

        Returns:
            Rounds, messages and adjustments of the update
        """
        self._validate(event)
        network = self.network
        network.reset_update()
        nodes = self.nodes
        u, v = event.u, event.v

        if event.op is UpdateOp.VERTEX_DELETE:
            participants = sorted(self.adjacency[u]) + [u]
        else:
            participants = [x for x in (u, v, *event.attach) if x is not None and self.present[x]]
        self._catch_up(participants)
        t_high = self.epoch.t_high
        m_snapshot = self.epoch.m_snapshot

        if event.op is UpdateOp.EDGE_INSERT:
            self._link(u, v)
            network.phase = Phase.MAINTENANCE
            self._run(nodes[u].begin_link(v) + nodes[v].begin_link(u))
            network.phase = Phase.RESOLUTION
            for x, y in ((u, v), (v, u)):
                if nodes[x].yields_to(y):
                    self._evict(x)

        elif event.op is UpdateOp.EDGE_DELETE:
            self._unlink(u, v)
            network.phase = Phase.MAINTENANCE
            self._run(nodes[u].begin_unlink(v) + nodes[v].begin_unlink(u))
            network.phase = Phase.RESOLUTION
            for x, y in ((u, v), (v, u)):
                self._drive(nodes[x].resolve_lost_partner(y))

        elif event.op is UpdateOp.VERTEX_INSERT:
            self.present[u] = True
            for s in event.attach:
                self._link(u, s)
            network.phase = Phase.MAINTENANCE
            batch = nodes[u].arrive(event.attach, self.serial_field, self.epoch.m_snapshot)
            for s in event.attach:
                batch.extend(nodes[s].begin_link(u))
            self._run(batch)
            network.phase = Phase.RESOLUTION
            self._drive(nodes[u].decide_on_arrival())

        else:
            neighbors = sorted(self.adjacency[u])
            network.phase = Phase.RESOLUTION
            if nodes[u].mis_flag:
                self._evict(u)
            network.phase = Phase.MAINTENANCE
            for x in neighbors:
                self._unlink(u, x)
            batch = nodes[u].depart()
            for x in neighbors:
                batch.extend(nodes[x].begin_unlink(u))
            self._run(batch)
            self.present[u] = False
            participants = neighbors

        if epoch_expired(self.edge_count, self.epoch.m_snapshot):
            self.serial += 1
            self.epoch = make_epoch(self.edge_count, event.index + 1)
            self.metrics.epochs.append(self.epoch.m_snapshot)
            initiators = [x for x in participants if self.present[x]]
            if initiators:
                self.sim_epoch_broadcast(min(initiators))
        self._grace.clear()

        return self._account(event.index, t_high, m_snapshot)

    def _account(self, index: int, t_high: int, m_snapshot: int) -> SimUpdateMetrics:
        network = self.network
        outputs = sorted(self.sinks.outputs)
        self.sinks.outputs.clear()
        record = SimUpdateMetrics(
            index=index,
            removed=[node for _, node, joined in outputs if not joined],
            inserted=[node for _, node, joined in outputs if joined],
            rounds=network.phase_rounds[Phase.RESOLUTION],
            messages=network.phase_messages[Phase.RESOLUTION],
            maintenance_rounds=network.phase_rounds[Phase.MAINTENANCE],
            maintenance_messages=network.phase_messages[Phase.MAINTENANCE],
            broadcast_rounds=network.phase_rounds[Phase.BROADCAST],
            broadcast_messages=network.phase_messages[Phase.BROADCAST],
            m_snapshot=m_snapshot,
        )
        metrics = self.metrics
        metrics.updates.append(record)
        metrics.rounds += record.total_rounds
        metrics.messages += record.total_messages
        metrics.adjustments += record.adjustments
        metrics.message_budget += t_high
        metrics.max_payload_bits = network.max_payload_bits

        for (procedure, origin, _), (count, rounds) in network.trace_stats.items():
            if procedure is Procedure.UPDATE_NEIGHBORS:
                metrics.update_neighbors_calls += 1
                round_limit, exact, slack = 1, t_high, settings.sim_neighbor_slack * t_high
            else:
                metrics.two_hop_calls += 1
                round_limit, exact, slack = 2, 2 * t_high, settings.sim_two_hop_slack * t_high
            if len(rounds) > round_limit:
                metrics.round_violations += 1
                self._violation(f"{procedure.value} at {origin} took {len(rounds)} rounds", hard=True)
            if count > exact:
                metrics.procedure_violations += 1
                self._violation(f"{procedure.value} at {origin} sent {count} > {exact} messages", hard=count > slack)
            if count > slack:
                metrics.procedure_overflows += 1

        adjustments = record.adjustments
        constant = settings.sim_constant
        problems = []
        if len(record.removed) > 1 and len(record.inserted) < 2 * len(record.removed):
            problems.append(f"removed {len(record.removed)} but inserted {len(record.inserted)}")
        if record.rounds > constant * (1 + adjustments):
            problems.append(f"{record.rounds} resolution rounds")
        if problems:
            metrics.invariant_violations += 1
            self._violation(f"update {index}: " + "; ".join(problems), hard=True)
        if record.messages > constant * t_high * (1 + adjustments):
            metrics.invariant_violations += 1
            self._violation(f"update {index}: {record.messages} resolution messages", hard=False)
        return record

    def _violation(self, message: str, hard: bool) -> None:
        logger.warning(f"Simulation bound exceeded: {message}")
        if hard and self.strict:
            raise SimulationError(message)

    def sim_run(self, events: Sequence[UpdateEvent]) -> SimMetrics:
        for event in events:
            self.sim_apply(event)
        logger.info(
            f"Simulated {len(events)} updates: {self.metrics.rounds} rounds, "
            f"{self.metrics.messages} messages, {self.metrics.adjustments} adjustments"
        )
        return self.metrics
