from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field


class DegreeClass(str, Enum):
    """Degree class of a vertex, ordered from highest to lowest."""
    HIGH = "High"
    MED_HIGH = "MedHigh"
    MED_LOW = "MedLow"
    LOW = "Low"


class UpdateOp(str, Enum):
    """Kind of change carried by an update event."""
    EDGE_INSERT = "EdgeInsert"
    EDGE_DELETE = "EdgeDelete"
    VERTEX_INSERT = "VertexInsert"
    VERTEX_DELETE = "VertexDelete"


class EngineKind(str, Enum):
    """Sequential engine serving an epoch."""
    DELTA = "delta"
    SUBLINEAR = "sublinear"


class ResolutionCase(str, Enum):
    """Branch taken while restoring maximality after an update."""
    DELETE_DIRECT = "delete-direct"
    DELETE_SCAN = "delete-scan"
    INSERT_CONFLICT = "insert-conflict"
    CASE_1A = "case-1a"
    CASE_1B = "case-1b"
    CASE_2 = "case-2"


class FindingKind(str, Enum):
    """Predicate violated by an audit witness."""
    NOT_INDEPENDENT = "NotIndependent"
    NOT_MAXIMAL = "NotMaximal"
    INV1_MISMATCH = "Inv1Mismatch"
    INV2_MISMATCH = "Inv2Mismatch"
    DEGREE_EST_OUT = "DegreeEstOut"
    CLASS_MISMATCH = "ClassMismatch"
    REGISTRY_MISMATCH = "RegistryMismatch"
    CACHE_MISMATCH = "CacheMismatch"
    CORE_SHAPE = "CoreShape"


class EpochConfig(BaseModel):
    """Edge-count snapshot frozen for one epoch and the class thresholds derived from it."""
    m_snapshot: int = Field(..., ge=1, description="Edge count frozen at epoch start (1 for the empty graph)")
    t_high: int = Field(..., ge=1, description="ceil(m^3/4)")
    t_medhigh: int = Field(..., ge=1, description="ceil(m^1/2)")
    t_medlow: int = Field(..., ge=1, description="ceil(m^1/4)")
    epoch_start_index: int = Field(default=0, ge=0, description="Global update index at which the epoch began")

    class Config:
        frozen = True


class UpdateEvent(BaseModel):
    """One indexed change of the graph."""
    index: int = Field(..., ge=0, description="Global sequence number, consecutive from 0")
    op: UpdateOp = Field(..., description="Kind of change")
    u: int = Field(..., ge=0, description="First endpoint, or the vertex of a vertex operation")
    v: Optional[int] = Field(default=None, ge=0, description="Second endpoint of an edge operation")
    attach: Tuple[int, ...] = Field(default=(), description="Initial neighbors of an inserted vertex")

    class Config:
        frozen = True

    @property
    def endpoints(self) -> Tuple[int, ...]:
        return (self.u,) if self.v is None else (self.u, self.v)


class ClassChange(BaseModel):
    """A vertex whose degree class changed during a raw edge operation."""
    vertex: int
    old: DegreeClass
    new: DegreeClass

    class Config:
        frozen = True


class EdgeChangeReport(BaseModel):
    """Outcome of a raw edge insertion or deletion in the graph core."""
    u: int = Field(..., description="First endpoint")
    v: int = Field(..., description="Second endpoint")
    inserted: bool = Field(..., description="True for an insertion, False for a deletion")
    both_in_mis: bool = Field(default=False, description="Both endpoints are MIS members after the change")
    class_changes: List[ClassChange] = Field(default=[], description="Vertices whose degree class changed")
    maintenance_ops: int = Field(default=0, description="Elementary operations spent on bookkeeping")

    class Config:
        frozen = True


class AdjustmentReport(BaseModel):
    """MIS changes caused by one update and the work spent resolving them."""
    index: int = Field(default=0, description="Index of the update")
    removed: List[int] = Field(default=[], description="Vertices that left the MIS, in order")
    inserted: List[int] = Field(default=[], description="Vertices that joined the MIS, in order")
    ops_spent: int = Field(default=0, description="Elementary operations spent restoring the MIS")
    maintenance_ops: int = Field(default=0, description="Elementary operations spent on data-structure upkeep")
    cases: List[ResolutionCase] = Field(default=[], description="Resolution branches taken")
    rebuilt: bool = Field(default=False, description="An epoch rebuild followed this update")

    class Config:
        frozen = True

    @property
    def adjustments(self) -> int:
        return len(self.removed) + len(self.inserted)

    @property
    def core_shape_ok(self) -> bool:
        return len(self.removed) <= 1 or len(self.inserted) >= 2 * len(self.removed)


class AuditFinding(BaseModel):
    """A violated predicate together with its witness."""
    kind: FindingKind = Field(..., description="Violated predicate")
    vertex: Optional[int] = Field(default=None, description="Witness vertex")
    edge: Optional[Tuple[int, int]] = Field(default=None, description="Witness edge")
    key: Optional[int] = Field(default=None, description="Neighbor key of a two-hop entry")
    expected: Optional[int] = Field(default=None, description="Recomputed value")
    stored: Optional[int] = Field(default=None, description="Value held by the engine")
    detail: Optional[str] = Field(default=None, description="Free-form context")

    class Config:
        frozen = True


class EpochSummary(BaseModel):
    """One row of the per-epoch table."""
    ordinal: int = Field(..., description="Epoch number, from 0")
    start_index: int = Field(..., description="First update index of the epoch")
    m_snapshot: int = Field(..., description="Frozen edge count")
    t_high: int = Field(..., description="High threshold of the epoch")
    engine: EngineKind = Field(..., description="Engine that served the epoch")
    updates: int = Field(default=0, description="Updates applied during the epoch")
    ops: int = Field(default=0, description="Elementary operations charged to the epoch")
    rebuild_ops: int = Field(default=0, description="Rebuild work charged to the epoch it closed")


class UpdateRecord(BaseModel):
    """Per-update line of the --per-update output."""
    index: int
    removed: List[int]
    inserted: List[int]
    ops: int
    rounds: Optional[int] = None
    messages: Optional[int] = None


class SimUpdateMetrics(BaseModel):
    """Distributed cost of one update."""
    index: int = Field(..., description="Update index")
    removed: List[int] = Field(default=[], description="Nodes that left the MIS")
    inserted: List[int] = Field(default=[], description="Nodes that joined the MIS")
    rounds: int = Field(default=0, description="Rounds spent restoring the MIS")
    messages: int = Field(default=0, description="Messages spent restoring the MIS")
    maintenance_rounds: int = Field(default=0, description="Rounds spent on greetings, estimates and counters")
    maintenance_messages: int = Field(default=0, description="Messages spent on greetings, estimates and counters")
    broadcast_rounds: int = Field(default=0, description="Rounds of epoch floods and rebuilds")
    broadcast_messages: int = Field(default=0, description="Messages of epoch floods and rebuilds")
    m_snapshot: int = Field(default=1, description="Epoch snapshot in force for the update")

    @property
    def adjustments(self) -> int:
        return len(self.removed) + len(self.inserted)

    @property
    def total_rounds(self) -> int:
        return self.rounds + self.maintenance_rounds + self.broadcast_rounds

    @property
    def total_messages(self) -> int:
        return self.messages + self.maintenance_messages + self.broadcast_messages


class SimMetrics(BaseModel):
    """Cumulative cost of a simulated run."""
    updates: List[SimUpdateMetrics] = Field(default=[], description="Per-update metrics")
    rounds: int = Field(default=0, description="All rounds, every phase")
    messages: int = Field(default=0, description="All messages, every phase")
    adjustments: int = Field(default=0, description="Total MIS membership changes")
    message_budget: int = Field(default=0, description="Sum over updates of ceil(m_snapshot^3/4)")
    epochs: List[int] = Field(default=[], description="m_snapshot of every epoch, in order")
    update_neighbors_calls: int = Field(default=0, description="UpdateNeighbors invocations that sent messages")
    two_hop_calls: int = Field(default=0, description="UpdateTwoHopNeighbors invocations that sent messages")
    procedure_violations: int = Field(default=0, description="Invocations above the exact per-procedure bounds")
    procedure_overflows: int = Field(default=0, description="Invocations above the per-procedure slack ceilings")
    round_violations: int = Field(default=0, description="Invocations above the per-procedure round bounds")
    invariant_violations: int = Field(default=0, description="Updates breaking the per-update shape or cost bounds")
    max_payload_bits: int = Field(default=0, description="Largest encoded payload seen")


class RunReport(BaseModel):
    """Summary of one CLI run."""
    algo: str = Field(..., description="delta, sublinear, auto or simulate")
    n: int = Field(..., description="Vertex count")
    updates: int = Field(default=0, description="Number of updates replayed")
    final_m: int = Field(default=0, description="Live edge count at the end")
    final_mis_size: int = Field(default=0, description="MIS size at the end")
    total_adjustments: int = Field(default=0, description="Sum of per-update adjustments")
    max_update_adjustments: int = Field(default=0, description="Largest single-update adjustment count")
    total_ops: int = Field(default=0, description="Elementary operations, all kinds")
    maintenance_ops: int = Field(default=0, description="Elementary operations spent on upkeep")
    epochs: List[EpochSummary] = Field(default=[], description="Per-epoch table")
    rounds: Optional[int] = Field(default=None, description="Simulated rounds (simulate only)")
    messages: Optional[int] = Field(default=None, description="Simulated messages (simulate only)")
    violations: Dict[str, int] = Field(default={}, description="Recorded bound violations by name")
    wall_time_s: float = Field(default=0.0, description="Elapsed wall time, excluded from comparisons")
