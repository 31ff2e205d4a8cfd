"""Bounded-degree engine: exact MIS-neighbor counters, at most one departure per update."""
import logging
from typing import Dict, Iterable, List, Optional, Tuple

import networkx as nx

from app.core.thresholds import make_epoch
from app.models.schemas import AdjustmentReport, EngineKind, ResolutionCase, UpdateEvent, UpdateOp
from app.services.graph_core import (
    DuplicateEdgeError,
    GraphUpdateError,
    InvariantViolationError,
    MissingEdgeError,
    SelfLoopError,
    VertexRangeError,
)
from app.services.ledger import CostLedger

logger = logging.getLogger(__name__)


class DegreeBoundError(GraphUpdateError):
    """Custom exception for updates that would exceed the declared maximum degree."""
    pass


class DeltaEngine:
    """
    MIS maintenance for graphs whose degree never exceeds a declared bound.

    Every vertex keeps the exact number of its MIS neighbors, so each update
    is resolved by scanning the neighborhood of at most one vertex.
    """

    name = EngineKind.DELTA

    def __init__(
        self,
        n: int,
        delta_bound: Optional[int] = None,
        ledger: Optional[CostLedger] = None,
        owns_epochs: bool = True,
    ):
        if n < 0:
            raise ValueError(f"Vertex count must be non-negative, got {n}")
        if delta_bound is not None and delta_bound < 0:
            raise ValueError(f"Degree bound must be non-negative, got {delta_bound}")
        self.n = n
        self.delta_bound = delta_bound
        self.ledger = ledger or CostLedger()
        self.adjacency: List[Dict[int, None]] = [{} for _ in range(n)]
        self.mis_flag: List[bool] = [True] * n
        self.mis_counter: List[int] = [0] * n
        self._edge_count = 0
        self.build_ops = 0
        if owns_epochs:
            self.ledger.open_epoch(make_epoch(0), self.name)

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[Tuple[int, int]],
        delta_bound: Optional[int] = None,
        ledger: Optional[CostLedger] = None,
        members: Optional[Iterable[int]] = None,
        owns_epochs: bool = True,
    ) -> "DeltaEngine":
        """
        Build an engine over an existing edge set.

        Args:
            n: Vertex count
            edges: Live edges
            delta_bound: Declared maximum degree
            ledger: Shared cost ledger
            members: A maximal independent set to keep; greedy by ascending id when omitted
            owns_epochs: Open a ledger epoch for this engine

        Returns:
            Engine whose counters match the chosen MIS
        """
        engine = cls(n, delta_bound=delta_bound, ledger=ledger, owns_epochs=owns_epochs)
        for u, v in edges:
            engine._validate_insert(u, v)
            engine.adjacency[u][v] = None
            engine.adjacency[v][u] = None
            engine._edge_count += 1

        if members is None:
            engine.mis_flag = [False] * n
            for v in range(n):
                if not any(engine.mis_flag[x] for x in engine.adjacency[v]):
                    engine.mis_flag[v] = True
        else:
            chosen = set(members)
            engine.mis_flag = [v in chosen for v in range(n)]

        for v in range(n):
            engine.mis_counter[v] = sum(1 for x in engine.adjacency[v] if engine.mis_flag[x])
            if not engine.mis_flag[v]:
                engine.ledger.place_budget(v, engine._budget)
        engine.build_ops = n + 2 * engine._edge_count
        return engine

    # Queries

    @property
    def edge_count(self) -> int:
        return self._edge_count

    @property
    def _budget(self) -> int:
        return max(1, self.delta_bound if self.delta_bound is not None else self.n - 1)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adjacency[u]

    def members(self) -> List[int]:
        return [v for v in range(self.n) if self.mis_flag[v]]

    def edges(self) -> List[Tuple[int, int]]:
        return sorted((u, v) for u in range(self.n) for v in self.adjacency[u] if u < v)

    def snapshot(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.edges())
        return graph

    # Updates

    def _check_pair(self, u: int, v: int) -> None:
        for x in (u, v):
            if not 0 <= x < self.n:
                raise VertexRangeError(f"Vertex {x} is outside [0, {self.n})")
        if u == v:
            raise SelfLoopError(f"Self-loop at vertex {u}")

    def _validate_insert(self, u: int, v: int) -> None:
        self._check_pair(u, v)
        if v in self.adjacency[u]:
            raise DuplicateEdgeError(f"Edge ({u}, {v}) is already live")
        if self.delta_bound is not None:
            for x in (u, v):
                if len(self.adjacency[x]) + 1 > self.delta_bound:
                    raise DegreeBoundError(
                        f"Inserting ({u}, {v}) would raise the degree of {x} above {self.delta_bound}"
                    )

    def _join(self, v: int) -> int:
        self.mis_flag[v] = True
        for x in self.adjacency[v]:
            self.mis_counter[x] += 1
        self.ledger.spend_budget(v)
        return len(self.adjacency[v]) + 1

    def _leave(self, v: int) -> int:
        self.mis_flag[v] = False
        for x in self.adjacency[v]:
            self.mis_counter[x] -= 1
            if self.mis_counter[x] < 0:
                raise InvariantViolationError(f"MIS counter of {x} became negative")
        self.ledger.place_budget(v, self._budget)
        return len(self.adjacency[v]) + 1

    def delta_insert_edge(self, u: int, v: int, index: int = 0) -> AdjustmentReport:
        """
        Insert (u, v); if both endpoints are in the MIS the lower id leaves and
        its neighbors with no remaining MIS neighbor join in adjacency order.
        """
        self._validate_insert(u, v)
        self.adjacency[u][v] = None
        self.adjacency[v][u] = None
        self._edge_count += 1
        if self.mis_flag[u]:
            self.mis_counter[v] += 1
        if self.mis_flag[v]:
            self.mis_counter[u] += 1
        self.ledger.maintenance_ops += 2

        removed: List[int] = []
        inserted: List[int] = []
        cases: List[ResolutionCase] = []
        ops = 1
        if self.mis_flag[u] and self.mis_flag[v]:
            w = min(u, v)
            cases.append(ResolutionCase.INSERT_CONFLICT)
            ops += self._leave(w)
            removed.append(w)
            for x in self.adjacency[w]:
                ops += 1
                if not self.mis_flag[x] and self.mis_counter[x] == 0:
                    ops += self._join(x)
                    inserted.append(x)

        return self._finish(index, removed, inserted, ops, cases)

    def delta_delete_edge(self, u: int, v: int, index: int = 0) -> AdjustmentReport:
        """Delete (u, v); an endpoint left without MIS neighbors joins."""
        self._check_pair(u, v)
        if v not in self.adjacency[u]:
            raise MissingEdgeError(f"Edge ({u}, {v}) is not live")
        if self.mis_flag[u] and self.mis_flag[v]:
            raise InvariantViolationError(f"Both endpoints of live edge ({u}, {v}) are in the MIS")
        if self.mis_flag[u]:
            self.mis_counter[v] -= 1
        if self.mis_flag[v]:
            self.mis_counter[u] -= 1
        del self.adjacency[u][v]
        del self.adjacency[v][u]
        self._edge_count -= 1
        self.ledger.maintenance_ops += 2

        inserted: List[int] = []
        cases: List[ResolutionCase] = []
        ops = 1
        for x in (u, v):
            if not self.mis_flag[x] and self.mis_counter[x] == 0:
                cases.append(ResolutionCase.DELETE_DIRECT)
                ops += self._join(x)
                inserted.append(x)

        return self._finish(index, [], inserted, ops, cases)

    def _finish(
        self,
        index: int,
        removed: List[int],
        inserted: List[int],
        ops: int,
        cases: List[ResolutionCase],
    ) -> AdjustmentReport:
        report = AdjustmentReport(
            index=index,
            removed=removed,
            inserted=inserted,
            ops_spent=ops,
            maintenance_ops=2,
            cases=cases,
        )
        self.ledger.record_update(report)
        return report

    def apply(self, event: UpdateEvent) -> AdjustmentReport:
        if event.op is UpdateOp.EDGE_INSERT:
            return self.delta_insert_edge(event.u, event.v, event.index)
        if event.op is UpdateOp.EDGE_DELETE:
            return self.delta_delete_edge(event.u, event.v, event.index)
        raise GraphUpdateError(f"Update {event.index}: vertex operations are only supported by the simulator")

    def get_stats(self) -> Dict[str, int]:
        return {
            "n": self.n,
            "m": self._edge_count,
            "mis_size": sum(self.mis_flag),
            "delta_bound": -1 if self.delta_bound is None else self.delta_bound,
        }
