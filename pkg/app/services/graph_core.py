"""
Dynamic graph with the bookkeeping the sublinear engine resolves against:
degree estimates, degree classes, class-partitioned neighbor lists, and the
MIS counters mis_nei (one-hop) and mis_2hop (two-hop through Low vertices).
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import networkx as nx

from app.core.thresholds import classify, make_epoch
from app.models.schemas import ClassChange, DegreeClass, EdgeChangeReport, EpochConfig
from app.services.ledger import CostLedger

logger = logging.getLogger(__name__)

HIGH = DegreeClass.HIGH
MED_HIGH = DegreeClass.MED_HIGH
MED_LOW = DegreeClass.MED_LOW
LOW = DegreeClass.LOW

# Classes whose MIS members are counted by mis_2hop.
LOW_SIDE = (MED_LOW, LOW)
NON_LOW = (HIGH, MED_HIGH, MED_LOW)


class GraphUpdateError(Exception):
    """Custom exception for updates the graph cannot apply."""
    pass


class VertexRangeError(GraphUpdateError):
    """Custom exception for vertex ids outside [0, n)."""
    pass


class SelfLoopError(GraphUpdateError):
    """Custom exception for edges whose endpoints coincide."""
    pass


class DuplicateEdgeError(GraphUpdateError):
    """Custom exception for inserting an edge that is already live."""
    pass


class MissingEdgeError(GraphUpdateError):
    """Custom exception for deleting an edge that is not live."""
    pass


class InvariantViolationError(Exception):
    """Custom exception for internal states an engine must never reach."""
    pass


def counts_toward(observer: DegreeClass, member: DegreeClass) -> bool:
    """Whether an MIS member of class `member` is counted in the mis_nei of an `observer` neighbor."""
    return observer is not LOW or member is not HIGH


class ClassedNeighbors:
    """Neighbor set partitioned by degree class, in insertion order per class."""

    __slots__ = ("_buckets", "_locator")

    def __init__(self):
        self._buckets: Dict[DegreeClass, Dict[int, None]] = {cls: {} for cls in DegreeClass}
        self._locator: Dict[int, DegreeClass] = {}

    def add(self, x: int, cls: DegreeClass) -> None:
        self._locator[x] = cls
        self._buckets[cls][x] = None

    def remove(self, x: int) -> DegreeClass:
        cls = self._locator.pop(x)
        del self._buckets[cls][x]
        return cls

    def move(self, x: int, cls: DegreeClass) -> None:
        old = self._locator[x]
        if old is cls:
            return
        del self._buckets[old][x]
        self._buckets[cls][x] = None
        self._locator[x] = cls

    def class_of(self, x: int) -> DegreeClass:
        return self._locator[x]

    def in_class(self, *classes: DegreeClass) -> Iterator[int]:
        for cls in classes:
            yield from self._buckets[cls]

    def count(self, cls: DegreeClass) -> int:
        return len(self._buckets[cls])

    def __contains__(self, x: int) -> bool:
        return x in self._locator

    def __iter__(self) -> Iterator[int]:
        return iter(self._locator)

    def __len__(self) -> int:
        return len(self._locator)


class TwoHopTable:
    """
    mis_2hop entries of one vertex, keyed by its Low neighbors.

    Keys whose value is zero are indexed separately so they can be listed in
    time proportional to their number.
    """

    __slots__ = ("counts", "zeros")

    def __init__(self):
        self.counts: Dict[int, int] = {}
        self.zeros: Dict[int, None] = {}

    def create(self, key: int, value: int) -> None:
        self.counts[key] = value
        if value == 0:
            self.zeros[key] = None
        else:
            self.zeros.pop(key, None)

    def retire(self, key: int) -> None:
        self.counts.pop(key, None)
        self.zeros.pop(key, None)

    def shift(self, key: int, delta: int) -> None:
        old = self.counts[key]
        value = old + delta
        if value < 0:
            raise InvariantViolationError(f"mis_2hop entry for {key} would become negative")
        self.counts[key] = value
        if value == 0:
            self.zeros[key] = None
        elif old == 0:
            del self.zeros[key]

    def get(self, key: int) -> Optional[int]:
        return self.counts.get(key)

    def zero_keys(self) -> List[int]:
        return list(self.zeros)

    def __contains__(self, key: int) -> bool:
        return key in self.counts

    def __len__(self) -> int:
        return len(self.counts)


@dataclass(slots=True)
class VertexRecord:
    """Everything the engine stores for one vertex."""
    neighbors: ClassedNeighbors = field(default_factory=ClassedNeighbors)
    neighbor_degree: Dict[int, int] = field(default_factory=dict)
    degree_est: int = 0
    klass: DegreeClass = LOW
    mis_flag: bool = True
    mis_nei: int = 0
    mis_2hop: TwoHopTable = field(default_factory=TwoHopTable)


class DynamicGraph:
    """
    Simple undirected graph on vertices [0, n) with MIS bookkeeping.

    The MIS itself (mis_flag) is decided by the engines; the graph keeps the
    counters consistent with the flags across edge changes, degree refreshes
    and class changes. Every vertex starts isolated and in the MIS.
    """

    def __init__(self, n: int, epoch: Optional[EpochConfig] = None, ledger: Optional[CostLedger] = None):
        if n < 0:
            raise ValueError(f"Vertex count must be non-negative, got {n}")
        self.n = n
        self.epoch = epoch or make_epoch(0)
        self.ledger = ledger or CostLedger()
        self.records: List[VertexRecord] = [VertexRecord() for _ in range(n)]
        self.registry: Dict[DegreeClass, Dict[int, None]] = {cls: {} for cls in DegreeClass}
        self.registry[LOW] = dict.fromkeys(range(n))
        # Non-isolated vertices; rebuilds touch only these.
        self.active: Dict[int, None] = {}
        self._edge_count = 0

    # Queries

    @property
    def edge_count(self) -> int:
        return self._edge_count

    def degree(self, v: int) -> int:
        return len(self.records[v].neighbors)

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.records[u].neighbors

    def class_of(self, v: int) -> DegreeClass:
        return self.records[v].klass

    def in_mis(self, v: int) -> bool:
        return self.records[v].mis_flag

    def members(self) -> List[int]:
        return [v for v, rec in enumerate(self.records) if rec.mis_flag]

    def edges(self) -> List[Tuple[int, int]]:
        return sorted((u, v) for u in self.active for v in self.records[u].neighbors if u < v)

    def snapshot(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.edges())
        return graph

    def low_side_members(self, v: int) -> int:
        """|N(v) ∩ M ∩ (MedLow ∪ Low)|, the value of every mis_2hop entry keyed by v."""
        records = self.records
        return sum(1 for x in records[v].neighbors.in_class(MED_LOW, LOW) if records[x].mis_flag)

    def _check_pair(self, u: int, v: int) -> None:
        for x in (u, v):
            if not 0 <= x < self.n:
                raise VertexRangeError(f"Vertex {x} is outside [0, {self.n})")
        if u == v:
            raise SelfLoopError(f"Self-loop at vertex {u}")

    # Raw edge operations

    def insert_edge_raw(self, u: int, v: int) -> EdgeChangeReport:
        """
        Add edge (u, v) and restore mis_nei and mis_2hop for the current flags.

        Args:
            u: First endpoint
            v: Second endpoint

        Returns:
            EdgeChangeReport; both_in_mis tells the caller a conflict was created
        """
        self._check_pair(u, v)
        records = self.records
        ru, rv = records[u], records[v]
        if v in ru.neighbors:
            raise DuplicateEdgeError(f"Edge ({u}, {v}) is already live")

        cu, cv = ru.klass, rv.klass
        ru.neighbors.add(v, cv)
        rv.neighbors.add(u, cu)
        ru.neighbor_degree[v] = rv.degree_est
        rv.neighbor_degree[u] = ru.degree_est
        self._edge_count += 1
        self.active[u] = None
        self.active[v] = None
        ops = 2

        if ru.mis_flag and counts_toward(cv, cu):
            rv.mis_nei += 1
        if rv.mis_flag and counts_toward(cu, cv):
            ru.mis_nei += 1

        if cv is LOW:
            ru.mis_2hop.create(v, self.low_side_members(v))
            ops += len(rv.neighbors)
        if cu is LOW:
            rv.mis_2hop.create(u, self.low_side_members(u))
            ops += len(ru.neighbors)
        if ru.mis_flag and cu in LOW_SIDE and cv is LOW:
            ops += self._shift_entries(v, +1, skip=u)
        if rv.mis_flag and cv in LOW_SIDE and cu is LOW:
            ops += self._shift_entries(u, +1, skip=v)

        changes: List[ClassChange] = []
        ops += self._refresh(u, changes) + self._refresh(v, changes)
        self.ledger.maintenance_ops += ops
        return EdgeChangeReport(
            u=u,
            v=v,
            inserted=True,
            both_in_mis=ru.mis_flag and rv.mis_flag,
            class_changes=changes,
            maintenance_ops=ops,
        )

    def delete_edge_raw(self, u: int, v: int) -> EdgeChangeReport:
        """Remove edge (u, v); counters are settled before the adjacency goes."""
        self._check_pair(u, v)
        records = self.records
        ru, rv = records[u], records[v]
        if v not in ru.neighbors:
            raise MissingEdgeError(f"Edge ({u}, {v}) is not live")

        cu, cv = ru.klass, rv.klass
        ops = 2
        if ru.mis_flag and counts_toward(cv, cu):
            rv.mis_nei -= 1
        if rv.mis_flag and counts_toward(cu, cv):
            ru.mis_nei -= 1

        if cv is LOW:
            ru.mis_2hop.retire(v)
        if cu is LOW:
            rv.mis_2hop.retire(u)
        if ru.mis_flag and cu in LOW_SIDE and cv is LOW:
            ops += self._shift_entries(v, -1, skip=u)
        if rv.mis_flag and cv in LOW_SIDE and cu is LOW:
            ops += self._shift_entries(u, -1, skip=v)

        ru.neighbors.remove(v)
        rv.neighbors.remove(u)
        del ru.neighbor_degree[v]
        del rv.neighbor_degree[u]
        self._edge_count -= 1
        if not ru.neighbors:
            self.active.pop(u, None)
        if not rv.neighbors:
            self.active.pop(v, None)

        changes: List[ClassChange] = []
        ops += self._refresh(u, changes) + self._refresh(v, changes)
        self.ledger.maintenance_ops += ops
        return EdgeChangeReport(u=u, v=v, inserted=False, class_changes=changes, maintenance_ops=ops)

    def _shift_entries(self, w: int, delta: int, skip: Optional[int] = None) -> int:
        """Add delta to mis_2hop[x][w] for every neighbor x of the Low vertex w."""
        records = self.records
        ops = 0
        for x in records[w].neighbors:
            if x != skip:
                records[x].mis_2hop.shift(w, delta)
            ops += 1
        return ops

    # Degree estimates and classes

    def _refresh(self, v: int, changes: List[ClassChange]) -> int:
        rec = self.records[v]
        deg = len(rec.neighbors)
        est = rec.degree_est
        if not (deg > 2 * est or 2 * deg < est):
            return 0

        rec.degree_est = deg
        records = self.records
        for x in rec.neighbors:
            records[x].neighbor_degree[v] = deg
        ops = deg + 1
        self.ledger.refresh_ops += ops

        new = classify(deg, self.epoch)
        old = rec.klass
        if new is not old:
            ops += self.on_class_change(v, old, new)
            changes.append(ClassChange(vertex=v, old=old, new=new))
        return ops

    def on_class_change(self, v: int, old: DegreeClass, new: DegreeClass) -> int:
        """
        Move v from class `old` to `new` and repair everything that depends on it.

        Args:
            v: Vertex whose degree estimate crossed a threshold
            old: Previous class
            new: New class

        Returns:
            Number of elementary operations spent
        """
        records = self.records
        rec = records[v]
        rec.klass = new
        del self.registry[old][v]
        self.registry[new][v] = None

        ops = 1
        for x in rec.neighbors:
            records[x].neighbors.move(v, new)
            ops += 1

        # v's own counter gains or loses its High MIS neighbors.
        if (old is LOW) != (new is LOW):
            high_members = sum(1 for x in rec.neighbors.in_class(HIGH) if records[x].mis_flag)
            rec.mis_nei += high_members if old is LOW else -high_members
            ops += rec.neighbors.count(HIGH)

        # Low neighbors stop (or start) counting v.
        if rec.mis_flag and (old is HIGH) != (new is HIGH):
            delta = 1 if old is HIGH else -1
            for w in rec.neighbors.in_class(LOW):
                records[w].mis_nei += delta
                ops += 1

        # Entries keyed by v exist exactly while v is Low.
        if old is LOW and new is not LOW:
            for x in rec.neighbors:
                records[x].mis_2hop.retire(v)
                ops += 1
        elif new is LOW and old is not LOW:
            value = self.low_side_members(v)
            for x in rec.neighbors:
                records[x].mis_2hop.create(v, value)
            ops += 2 * len(rec.neighbors)

        if rec.mis_flag and (old in LOW_SIDE) != (new in LOW_SIDE):
            delta = 1 if new in LOW_SIDE else -1
            for w in rec.neighbors.in_class(LOW):
                ops += self._shift_entries(w, delta)

        self.ledger.class_change_ops += ops
        logger.debug(f"Vertex {v} moved {old.value} -> {new.value} ({ops} ops)")
        return ops

    # Bulk loading and epoch rebuilds

    def load_edges(self, edges: Iterable[Tuple[int, int]]) -> None:
        """Add adjacency only; the caller must rebuild before using counters."""
        for u, v in edges:
            self._check_pair(u, v)
            ru, rv = self.records[u], self.records[v]
            if v in ru.neighbors:
                raise DuplicateEdgeError(f"Edge ({u}, {v}) appears twice")
            ru.neighbors.add(v, LOW)
            rv.neighbors.add(u, LOW)
            self._edge_count += 1
            self.active[u] = None
            self.active[v] = None

    def rebuild(self, epoch: EpochConfig) -> int:
        """
        Adopt a new epoch: exact degree estimates, fresh classes and caches,
        and counters recomputed from the current MIS flags.

        Isolated vertices are already consistent (Low, zero counters), so the
        work is proportional to the live edges.

        Returns:
            Number of elementary operations spent
        """
        self.epoch = epoch
        records = self.records
        active = list(self.active)
        ops = 0

        for v in active:
            rec = records[v]
            rec.degree_est = len(rec.neighbors)
            new = classify(rec.degree_est, epoch)
            if new is not rec.klass:
                del self.registry[rec.klass][v]
                self.registry[new][v] = None
                rec.klass = new
            ops += 1

        low_values: Dict[int, int] = {}
        for v in active:
            rec = records[v]
            order = list(rec.neighbors)
            rec.neighbors = ClassedNeighbors()
            rec.neighbor_degree = {}
            for x in order:
                rx = records[x]
                rec.neighbors.add(x, rx.klass)
                rec.neighbor_degree[x] = rx.degree_est
            rec.mis_nei = sum(
                1 for x in order if records[x].mis_flag and counts_toward(rec.klass, records[x].klass)
            )
            ops += 2 * len(order)

        for v in active:
            if records[v].klass is LOW:
                low_values[v] = self.low_side_members(v)
                ops += len(records[v].neighbors)

        for v in active:
            rec = records[v]
            rec.mis_2hop = TwoHopTable()
            for w in rec.neighbors.in_class(LOW):
                rec.mis_2hop.create(w, low_values[w])
                ops += 1

        logger.info(
            f"Rebuilt {len(active)} active vertices for m_snapshot={epoch.m_snapshot} "
            f"(t_high={epoch.t_high}, t_medhigh={epoch.t_medhigh}, t_medlow={epoch.t_medlow})"
        )
        return ops

    def get_stats(self) -> Dict[str, int]:
        return {
            "n": self.n,
            "m": self._edge_count,
            "active": len(self.active),
            "mis_size": sum(1 for rec in self.records if rec.mis_flag),
            **{f"class_{cls.value}": len(members) for cls, members in self.registry.items()},
        }
