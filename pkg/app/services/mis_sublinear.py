"""
Deterministic MIS maintenance with sublinear amortized update work, and the
dispatcher that picks between it and the bounded-degree engine per epoch.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Iterable, List, Optional, Tuple, Union

import networkx as nx

from app.core.config import settings
from app.core.thresholds import epoch_expired, make_epoch
from app.models.schemas import (
    AdjustmentReport,
    DegreeClass,
    EngineKind,
    EpochConfig,
    ResolutionCase,
    UpdateEvent,
    UpdateOp,
)
from app.services.graph_core import (
    HIGH,
    LOW,
    LOW_SIDE,
    MED_HIGH,
    NON_LOW,
    DynamicGraph,
    GraphUpdateError,
    InvariantViolationError,
)
from app.services.ledger import CostLedger
from app.services.mis_delta import DegreeBoundError, DeltaEngine

logger = logging.getLogger(__name__)


@dataclass
class _Resolution:
    """Adjustments and work of the update being resolved."""
    removed: List[int] = field(default_factory=list)
    inserted: List[int] = field(default_factory=list)
    cases: List[ResolutionCase] = field(default_factory=list)
    ops: int = 0


class SublinearEngine:
    """
    MIS engine for arbitrary dynamic graphs.

    A deletion costs at most a scan of one Low neighborhood. An insertion
    between two MIS members evicts the lower id and repairs around it using
    the class-partitioned counters; when too many Low vertices become free at
    once, High (and MedHigh) members that lost independence are swept out and
    repaired in turn through a FIFO queue.
    """

    name = EngineKind.SUBLINEAR

    def __init__(
        self,
        n: int,
        ledger: Optional[CostLedger] = None,
        strict: Optional[bool] = None,
        manage_epochs: bool = True,
        epoch: Optional[EpochConfig] = None,
    ):
        self.ledger = ledger or CostLedger()
        self.graph = DynamicGraph(n, epoch or make_epoch(0), self.ledger)
        self.strict = settings.strict_invariants if strict is None else strict
        self.manage_epochs = manage_epochs
        self.queue: Deque[int] = deque()
        self._current = _Resolution()
        self.build_ops = 0
        if manage_epochs:
            self.ledger.open_epoch(self.graph.epoch, self.name)

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[Tuple[int, int]],
        ledger: Optional[CostLedger] = None,
        members: Optional[Iterable[int]] = None,
        strict: Optional[bool] = None,
        manage_epochs: bool = True,
        start_index: int = 0,
    ) -> "SublinearEngine":
        """
        Build an engine over an existing edge set.

        Args:
            n: Vertex count
            edges: Live edges
            ledger: Shared cost ledger
            members: A maximal independent set to keep; greedy by ascending id when omitted
            strict: Raise on core-shape violations
            manage_epochs: Let the engine detect drift and rebuild by itself
            start_index: Update index at which the engine's first epoch starts

        Returns:
            Preprocessed engine
        """
        edges = list(edges)
        epoch = make_epoch(len(edges), start_index)
        engine = cls(n, ledger=ledger, strict=strict, manage_epochs=manage_epochs, epoch=epoch)
        engine.graph.load_edges(edges)
        records = engine.graph.records
        if members is not None:
            chosen = set(members)
            for v in engine.graph.active:
                records[v].mis_flag = v in chosen
            engine.build_ops = engine.preprocess(fresh=False)
        else:
            engine.build_ops = engine.preprocess(fresh=True)
        return engine

    # Queries

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def epoch(self) -> EpochConfig:
        return self.graph.epoch

    @property
    def edge_count(self) -> int:
        return self.graph.edge_count

    def degree(self, v: int) -> int:
        return self.graph.degree(v)

    def has_edge(self, u: int, v: int) -> bool:
        return self.graph.has_edge(u, v)

    def members(self) -> List[int]:
        return self.graph.members()

    def edges(self) -> List[Tuple[int, int]]:
        return self.graph.edges()

    def snapshot(self) -> nx.Graph:
        return self.graph.snapshot()

    # Preprocessing and epochs

    def preprocess(self, fresh: bool) -> int:
        """
        Recompute classes and counters for the current epoch, then run the
        greedy pass.

        A fresh pass clears the flags of non-isolated vertices and scans them
        by ascending id. Otherwise current members come first in the greedy
        order, so an existing MIS is kept unchanged.

        Returns:
            Number of elementary operations spent
        """
        graph = self.graph
        records = graph.records
        if fresh:
            for v in graph.active:
                records[v].mis_flag = False
        ops = graph.rebuild(graph.epoch)

        sink = _Resolution()
        previous, self._current = self._current, sink
        for v in sorted(graph.active):
            rec = records[v]
            ops += len(rec.neighbors) + 1
            if not rec.mis_flag and not any(records[x].mis_flag for x in rec.neighbors):
                self._join(v, spend=False)
        self._current = previous
        ops += sink.ops

        self.ledger.clear_budgets()
        for v in graph.active:
            if not records[v].mis_flag:
                self.ledger.place_budget(v, graph.epoch.t_high)
        return ops

    def rebuild(self, epoch: EpochConfig) -> int:
        """Close the current epoch and rebuild for `epoch`, keeping the MIS."""
        self.graph.epoch = epoch
        ops = self.preprocess(fresh=False)
        self.ledger.close_epoch(ops)
        if self.manage_epochs:
            self.ledger.open_epoch(epoch, self.name)
        return ops

    def epoch_check_and_rebuild(self, next_index: int) -> bool:
        m_t = self.graph.edge_count
        if not epoch_expired(m_t, self.graph.epoch.m_snapshot):
            return False
        logger.info(f"Epoch drift at update {next_index - 1}: m={m_t}, snapshot={self.graph.epoch.m_snapshot}")
        self.rebuild(make_epoch(m_t, next_index))
        return True

    # Membership changes with counter upkeep

    def update_neighbors(self, u: int, joined: bool) -> int:
        """
        Adjust mis_nei of the neighbors that count u.

        A High u is not counted by Low neighbors, so only its non-Low buckets
        are touched.
        """
        records = self.graph.records
        rec = records[u]
        delta = 1 if joined else -1
        targets = rec.neighbors.in_class(*NON_LOW) if rec.klass is HIGH else rec.neighbors
        ops = 1
        for x in targets:
            rx = records[x]
            rx.mis_nei += delta
            if rx.mis_nei < 0:
                raise InvariantViolationError(f"mis_nei of {x} became negative")
            ops += 1
        self._current.ops += ops
        return ops

    def update_two_hop_neighbors(self, u: int, joined: bool) -> int:
        """Adjust mis_2hop entries keyed by u's Low neighbors when u is MedLow or Low."""
        records = self.graph.records
        rec = records[u]
        if rec.klass not in LOW_SIDE:
            self._current.ops += 1
            return 1
        delta = 1 if joined else -1
        ops = 1
        for w in rec.neighbors.in_class(LOW):
            ops += self.graph._shift_entries(w, delta)
        self._current.ops += ops
        return ops

    def _join(self, v: int, spend: bool = True) -> None:
        self.graph.records[v].mis_flag = True
        self.update_neighbors(v, True)
        self.update_two_hop_neighbors(v, True)
        self._current.inserted.append(v)
        if spend:
            self.ledger.spend_budget(v)

    def _leave(self, v: int) -> None:
        self.graph.records[v].mis_flag = False
        self.update_neighbors(v, False)
        self.update_two_hop_neighbors(v, False)
        self._current.removed.append(v)
        self.ledger.place_budget(v, self.graph.epoch.t_high)

    def _is_free(self, v: int) -> bool:
        rec = self.graph.records[v]
        return not rec.mis_flag and rec.mis_nei == 0

    def _greedy_join(self, candidates: List[int]) -> int:
        joined = 0
        for w in candidates:
            self._current.ops += 1
            if self._is_free(w):
                self._join(w)
                joined += 1
        return joined

    # Update handling

    def handle_delete(self, u: int, v: int) -> None:
        """Restore maximality after (u, v) was removed."""
        records = self.graph.records
        fu, fv = records[u].mis_flag, records[v].mis_flag
        if fu and fv:
            raise InvariantViolationError(f"Both endpoints of deleted edge ({u}, {v}) were in the MIS")
        if not fu and not fv:
            return
        x = v if fu else u
        rec = records[x]
        self._current.ops += 1
        if rec.mis_nei != 0:
            return
        if rec.klass is not LOW:
            self._current.cases.append(ResolutionCase.DELETE_DIRECT)
            self._join(x)
            return
        # A Low counter ignores High members, so look at the neighborhood itself.
        self._current.cases.append(ResolutionCase.DELETE_SCAN)
        self._current.ops += len(rec.neighbors)
        if not any(records[y].mis_flag for y in rec.neighbors):
            self._join(x)

    def handle_insert(self, u: int, v: int) -> None:
        """Resolve a conflict created by inserting (u, v) between two MIS members."""
        records = self.graph.records
        if not (records[u].mis_flag and records[v].mis_flag):
            return
        loser = min(u, v)
        self._current.cases.append(ResolutionCase.INSERT_CONFLICT)
        self._leave(loser)
        self.process_removed(loser)
        self._drain()

    def process_removed(self, w: int) -> None:
        """Let neighbors of a vertex that just left the MIS join where they can."""
        records = self.graph.records
        non_low = sorted(records[w].neighbors.in_class(*NON_LOW))
        self._greedy_join(non_low)
        self.resolve_low_neighbors(w)

    def resolve_low_neighbors(self, u: int) -> None:
        """
        Decide which Low neighbors of u join, choosing the branch by how many
        of them lost all their MedLow/Low MIS neighbors.
        """
        records = self.graph.records
        epoch = self.graph.epoch
        l_2hop = sorted(records[u].mis_2hop.zero_keys())
        self._current.ops += len(l_2hop) + 1
        if not l_2hop:
            return

        if len(l_2hop) <= 4 * epoch.t_high:
            l_1hop = [w for w in l_2hop if records[w].mis_nei == 0]
            self._current.ops += len(l_2hop)
            if len(l_1hop) <= 4 * epoch.t_medhigh:
                self._current.cases.append(ResolutionCase.CASE_1A)
                l_mis = []
                for w in l_1hop:
                    self._current.ops += len(records[w].neighbors)
                    if not any(records[x].mis_flag for x in records[w].neighbors):
                        l_mis.append(w)
                self._greedy_join(l_mis)
            else:
                self._current.cases.append(ResolutionCase.CASE_1B)
                joined = self._greedy_join(l_1hop)
                self._sweep((HIGH,), joined)
        else:
            self._current.cases.append(ResolutionCase.CASE_2)
            joined = self._greedy_join(l_2hop)
            self._sweep((HIGH, MED_HIGH), joined)

    def _sweep(self, classes: Tuple[DegreeClass, ...], joined: int) -> None:
        """Evict members of `classes` that gained an MIS neighbor and queue them for repair."""
        graph = self.graph
        records = graph.records
        marked = []
        for cls in classes:
            self._current.ops += len(graph.registry[cls])
            # High and MedHigh registries stay within slack * m^{1/4} and slack * m^{1/2}.
            cap = settings.registry_slack * (graph.epoch.t_medlow if cls is HIGH else graph.epoch.t_medhigh)
            if len(graph.registry[cls]) > cap:
                self.ledger.record_violation("registry", f"{cls.value} registry holds {len(graph.registry[cls])} > {cap}")
            marked.extend(h for h in graph.registry[cls] if records[h].mis_flag and records[h].mis_nei > 0)
        if not marked:
            return
        marked.sort()

        if joined < 2 * len(marked):
            self.ledger.record_violation("sweep", f"{joined} joined but {len(marked)} swept")
        if joined <= len(marked):
            self.ledger.record_violation("monotonicity", f"MIS did not grow: +{joined} -{len(marked)}")

        for h in marked:
            records[h].mis_flag = False
        for h in marked:
            self.update_neighbors(h, False)
            self.update_two_hop_neighbors(h, False)
            self._current.removed.append(h)
            self.ledger.place_budget(h, graph.epoch.t_high)
        self.queue.extend(marked)
        logger.debug(f"Swept {len(marked)} vertices from {[c.value for c in classes]}")

    def _drain(self) -> None:
        limit = settings.drain_guard_factor * (self.graph.n + 1)
        steps = 0
        while self.queue:
            steps += 1
            if steps > limit:
                self.queue.clear()
                raise InvariantViolationError(f"Removal queue did not drain within {limit} steps")
            self.process_removed(self.queue.popleft())

    # Public update entry points

    def apply(self, event: UpdateEvent) -> AdjustmentReport:
        """
        Apply one edge update and restore the MIS.

        Args:
            event: Edge insertion or deletion

        Returns:
            AdjustmentReport for the update
        """
        self._current = _Resolution()
        if event.op is UpdateOp.EDGE_INSERT:
            change = self.graph.insert_edge_raw(event.u, event.v)
            if change.both_in_mis:
                self.handle_insert(event.u, event.v)
        elif event.op is UpdateOp.EDGE_DELETE:
            change = self.graph.delete_edge_raw(event.u, event.v)
            self.handle_delete(event.u, event.v)
        else:
            raise GraphUpdateError(f"Update {event.index}: vertex operations are only supported by the simulator")

        current = self._current
        report = AdjustmentReport(
            index=event.index,
            removed=current.removed,
            inserted=current.inserted,
            ops_spent=current.ops,
            maintenance_ops=change.maintenance_ops,
            cases=current.cases,
        )
        self._check_report(report)
        self.ledger.record_update(report)

        if self.manage_epochs and self.epoch_check_and_rebuild(event.index + 1):
            report = report.model_copy(update={"rebuilt": True})
        return report

    def _check_report(self, report: AdjustmentReport) -> None:
        t_high = self.graph.epoch.t_high
        limit = settings.update_ops_constant * t_high * max(1, report.adjustments)
        if report.ops_spent > limit:
            self.ledger.record_violation("ops_bound", f"update {report.index} spent {report.ops_spent} > {limit}")
        if not report.core_shape_ok:
            message = f"update {report.index} removed {len(report.removed)} but inserted {len(report.inserted)}"
            self.ledger.record_violation("core_shape", message)
            if self.strict:
                raise InvariantViolationError(message)

    def get_stats(self):
        return {**self.graph.get_stats(), **self.ledger.get_stats()}


Engine = Union[SublinearEngine, DeltaEngine]


class DispatchingEngine:
    """
    Owns the epoch and serves each one with the bounded-degree engine when
    the declared degree bound is at most the epoch's High threshold, and
    with the sublinear engine otherwise.
    """

    def __init__(
        self,
        n: int,
        delta_bound: Optional[int] = None,
        ledger: Optional[CostLedger] = None,
        strict: Optional[bool] = None,
    ):
        self.n = n
        self.delta_bound = delta_bound
        self.ledger = ledger or CostLedger()
        self.strict = strict
        self.epoch = make_epoch(0)
        self.engine: Engine = self._create(self.choose(self.epoch), [], None, 0)
        self.ledger.open_epoch(self.epoch, self.engine.name)
        self.served: List[EngineKind] = [self.engine.name]

    def choose(self, epoch: EpochConfig) -> EngineKind:
        if self.delta_bound is not None and self.delta_bound <= epoch.t_high:
            return EngineKind.DELTA
        return EngineKind.SUBLINEAR

    def _create(
        self, kind: EngineKind, edges: List[Tuple[int, int]], members: Optional[List[int]], start_index: int,
    ) -> Engine:
        if kind is EngineKind.DELTA:
            return DeltaEngine.from_edges(
                self.n, edges, delta_bound=self.delta_bound, ledger=self.ledger,
                members=members, owns_epochs=False,
            )
        return SublinearEngine.from_edges(
            self.n, edges, ledger=self.ledger, members=members, strict=self.strict,
            manage_epochs=False, start_index=start_index,
        )

    @property
    def name(self) -> EngineKind:
        return self.engine.name

    @property
    def edge_count(self) -> int:
        return self.engine.edge_count

    def members(self) -> List[int]:
        return self.engine.members()

    def edges(self) -> List[Tuple[int, int]]:
        return self.engine.edges()

    def snapshot(self) -> nx.Graph:
        return self.engine.snapshot()

    def _check_degree_bound(self, event: UpdateEvent) -> None:
        """Reject an insertion past the declared bound, whichever engine serves."""
        if self.delta_bound is None or event.op is not UpdateOp.EDGE_INSERT:
            return
        u, v = event.u, event.v
        # Range, self-loop and duplicate errors come from the serving engine.
        if u == v or not (0 <= u < self.n and 0 <= v < self.n) or self.engine.has_edge(u, v):
            return
        for x in (u, v):
            if self.engine.degree(x) + 1 > self.delta_bound:
                raise DegreeBoundError(f"Inserting ({u}, {v}) would raise the degree of {x} above {self.delta_bound}")

    def apply(self, event: UpdateEvent) -> AdjustmentReport:
        self._check_degree_bound(event)
        report = self.engine.apply(event)
        m_t = self.engine.edge_count
        if not epoch_expired(m_t, self.epoch.m_snapshot):
            return report

        epoch = make_epoch(m_t, event.index + 1)
        kind = self.choose(epoch)
        if kind is not self.engine.name:
            logger.info(f"Epoch at update {event.index + 1} switches {self.engine.name.value} -> {kind.value}")
            self.engine = self._create(kind, self.engine.edges(), self.engine.members(), epoch.epoch_start_index)
            self.ledger.close_epoch(self.engine.build_ops)
        elif isinstance(self.engine, SublinearEngine):
            self.engine.rebuild(epoch)
        else:
            # Bounded-degree state does not depend on the epoch.
            self.ledger.close_epoch(0)
        self.epoch = epoch
        self.ledger.open_epoch(epoch, kind)
        self.served.append(kind)
        return report.model_copy(update={"rebuilt": True})
