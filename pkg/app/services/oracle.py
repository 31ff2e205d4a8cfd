"""Independent checks: MIS validity, greedy reference, and full invariant audits."""
import logging
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set

import networkx as nx

from app.core.thresholds import classify
from app.models.schemas import AdjustmentReport, AuditFinding, DegreeClass, EpochConfig, FindingKind
from app.services.graph_core import LOW, LOW_SIDE, counts_toward
from app.services.mis_delta import DeltaEngine

logger = logging.getLogger(__name__)


def check_mis(graph: nx.Graph, members: Iterable[int]) -> List[AuditFinding]:
    """
    Verify that `members` is a maximal independent set of `graph`.

    Args:
        graph: Snapshot of the current graph
        members: Claimed MIS

    Returns:
        One finding per violated edge or undominated vertex, empty when valid
    """
    chosen: Set[int] = set(members)
    findings: List[AuditFinding] = []
    for u, v in sorted(tuple(sorted(edge)) for edge in graph.edges()):
        if u in chosen and v in chosen:
            findings.append(AuditFinding(kind=FindingKind.NOT_INDEPENDENT, edge=(u, v)))
    for v in sorted(graph.nodes()):
        if v not in chosen and not any(x in chosen for x in graph.neighbors(v)):
            findings.append(AuditFinding(kind=FindingKind.NOT_MAXIMAL, vertex=v))
    return findings


def greedy_mis(graph: nx.Graph, order: Sequence[int]) -> Set[int]:
    """Sequential greedy MIS over a permutation of the vertices."""
    if sorted(order) != sorted(graph.nodes()):
        raise ValueError("Greedy order must be a permutation of the graph's vertices")
    chosen: Set[int] = set()
    for v in order:
        if not any(x in chosen for x in graph.neighbors(v)):
            chosen.add(v)
    return chosen


def check_report_shape(report: AdjustmentReport) -> List[AuditFinding]:
    if report.core_shape_ok:
        return []
    return [
        AuditFinding(
            kind=FindingKind.CORE_SHAPE,
            expected=2 * len(report.removed),
            stored=len(report.inserted),
            detail=f"update {report.index}",
        )
    ]


def _audit_records(
    records: Mapping[int, Any],
    epoch_of: Callable[[int], EpochConfig],
    registry: Optional[Dict[DegreeClass, Dict[int, None]]] = None,
) -> List[AuditFinding]:
    """
    Recompute every per-vertex invariant from adjacency and flags.

    `records` maps vertex ids to objects exposing neighbors (class-partitioned),
    neighbor_degree, degree_est, klass, mis_flag, mis_nei and mis_2hop.
    """
    findings: List[AuditFinding] = []

    def low_side_members(w: int) -> int:
        return sum(
            1 for x in records[w].neighbors
            if records[x].mis_flag and records[x].klass in LOW_SIDE
        )

    for v in sorted(records):
        rec = records[v]
        deg = len(rec.neighbors)
        est = rec.degree_est
        if deg > 2 * est or 2 * deg < est:
            findings.append(AuditFinding(kind=FindingKind.DEGREE_EST_OUT, vertex=v, expected=deg, stored=est))

        expected_cls = classify(est, epoch_of(v))
        if rec.klass is not expected_cls:
            findings.append(AuditFinding(
                kind=FindingKind.CLASS_MISMATCH,
                vertex=v,
                detail=f"expected {expected_cls.value}, stored {rec.klass.value}",
            ))
        if registry is not None:
            homes = [cls for cls, members in registry.items() if v in members]
            if homes != [rec.klass]:
                findings.append(AuditFinding(
                    kind=FindingKind.REGISTRY_MISMATCH,
                    vertex=v,
                    detail=f"registered in {[cls.value for cls in homes]}, class {rec.klass.value}",
                ))

        for x in rec.neighbors:
            rx = records[x]
            if rec.neighbors.class_of(x) is not rx.klass:
                findings.append(AuditFinding(
                    kind=FindingKind.REGISTRY_MISMATCH,
                    vertex=v,
                    key=x,
                    detail=f"neighbor filed as {rec.neighbors.class_of(x).value}, class {rx.klass.value}",
                ))
            if rec.neighbor_degree.get(x) != rx.degree_est:
                findings.append(AuditFinding(
                    kind=FindingKind.CACHE_MISMATCH,
                    vertex=v,
                    key=x,
                    expected=rx.degree_est,
                    stored=rec.neighbor_degree.get(x),
                ))

        expected_nei = sum(
            1 for x in rec.neighbors
            if records[x].mis_flag and counts_toward(rec.klass, records[x].klass)
        )
        if rec.mis_nei != expected_nei:
            findings.append(AuditFinding(
                kind=FindingKind.INV1_MISMATCH, vertex=v, expected=expected_nei, stored=rec.mis_nei,
            ))

        low_keys = {x for x in rec.neighbors if records[x].klass is LOW}
        table = rec.mis_2hop
        for key in sorted(set(table.counts) | low_keys):
            stored = table.get(key)
            expected = low_side_members(key) if key in low_keys else None
            if stored != expected:
                findings.append(AuditFinding(
                    kind=FindingKind.INV2_MISMATCH, vertex=v, key=key, expected=expected, stored=stored,
                ))
            elif (key in table.zeros) != (stored == 0):
                findings.append(AuditFinding(
                    kind=FindingKind.INV2_MISMATCH, vertex=v, key=key, expected=expected, stored=stored,
                    detail="zero index out of sync",
                ))
    return findings


def audit_invariants(engine) -> List[AuditFinding]:
    """
    Audit a sublinear engine (or a dispatcher currently serving one).

    Args:
        engine: SublinearEngine, DispatchingEngine or DeltaEngine

    Returns:
        Findings for every invariant the stored state violates
    """
    inner = getattr(engine, "engine", engine)
    if isinstance(inner, DeltaEngine):
        return audit_delta(inner)
    graph = inner.graph
    records = dict(enumerate(graph.records))
    findings = _audit_records(records, lambda v: graph.epoch, graph.registry)
    if findings:
        logger.warning(f"Audit found {len(findings)} violation(s); first: {findings[0].kind.value}")
    return findings


def audit_delta(engine: DeltaEngine) -> List[AuditFinding]:
    """Check the exact MIS-neighbor counters of the bounded-degree engine."""
    findings: List[AuditFinding] = []
    for v in range(engine.n):
        expected = sum(1 for x in engine.adjacency[v] if engine.mis_flag[x])
        if engine.mis_counter[v] != expected:
            findings.append(AuditFinding(
                kind=FindingKind.INV1_MISMATCH, vertex=v, expected=expected, stored=engine.mis_counter[v],
            ))
    return findings


def audit_simulation(simulator) -> List[AuditFinding]:
    """
    Audit the local state of every present simulated node, each against its
    own epoch, plus the locally kept count of MedLow/Low MIS neighbors.
    """
    nodes = {node.id: node for node in simulator.nodes if node.present}
    findings = _audit_records(nodes, lambda v: nodes[v].epoch)
    for v in sorted(nodes):
        node = nodes[v]
        expected = sum(
            1 for x in node.neighbors
            if nodes[x].mis_flag and nodes[x].klass in LOW_SIDE
        )
        if node.own_2hop != expected:
            findings.append(AuditFinding(
                kind=FindingKind.INV2_MISMATCH, vertex=v, key=v, expected=expected, stored=node.own_2hop,
                detail="own MedLow/Low MIS neighbor count",
            ))
    return findings
