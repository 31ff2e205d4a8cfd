import json
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, TextIO

from app.core.config import settings
from app.models.schemas import AuditFinding, RunReport, UpdateEvent, UpdateOp, UpdateRecord
from app.services.congest_sim import CongestSimulator, SimulationError
from app.services.graph_core import GraphUpdateError, InvariantViolationError
from app.services.mis_delta import DeltaEngine
from app.services.mis_sublinear import DispatchingEngine, SublinearEngine
from app.services.oracle import audit_invariants, audit_simulation, check_mis, check_report_shape
from app.services.workload import (
    StreamFormatError,
    WorkloadParameterError,
    gen_adversary_appendix,
    gen_random,
    gen_sliding_window,
    gen_vertex_mix,
    stream_codec,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_AUDIT = 3


def _emit_findings(findings: List[AuditFinding], err: TextIO) -> None:
    witness = {"findings": [finding.model_dump(mode="json", exclude_none=True) for finding in findings]}
    err.write(json.dumps(witness) + "\n")


def _read_stream(path: str):
    if path == "-":
        return stream_codec.loads(sys.stdin.read())
    return stream_codec.read(path)


def cmd_gen(args, out: Optional[TextIO] = None) -> int:
    """Generate a stream and write it to --out (stdout by default)."""
    out = out or sys.stdout
    try:
        if args.kind == "random":
            events = gen_random(args.n, args.steps, insert_bias=args.insert_bias, seed=args.seed)
        elif args.kind == "window":
            events = gen_sliding_window(args.n, args.steps, window=args.window, seed=args.seed)
        elif args.kind == "vertex-mix":
            events = gen_vertex_mix(
                args.n, args.steps, vertex_rate=args.vertex_rate, insert_bias=args.insert_bias, seed=args.seed,
            )
        else:
            events = gen_adversary_appendix(args.n)
    except WorkloadParameterError as e:
        logger.error(f"Invalid generator parameters: {e}")
        return EXIT_USAGE

    if args.out and args.out != "-":
        stream_codec.write(args.out, args.n, events)
    else:
        out.write(stream_codec.dumps(args.n, events))
    return EXIT_OK


def _make_engine(algo: str, n: int, delta_bound: Optional[int]):
    if algo == "delta":
        return DeltaEngine(n, delta_bound=delta_bound)
    if algo == "sublinear":
        return SublinearEngine(n)
    return DispatchingEngine(n, delta_bound=delta_bound)


def cmd_run(args, out: Optional[TextIO] = None, err: Optional[TextIO] = None) -> int:
    """
    Replay a stream through a sequential engine and print the run report.

    The exit code is 2 for malformed input or a violated precondition and 3
    when --verify finds a violation.
    """
    out, err = out or sys.stdout, err or sys.stderr
    try:
        n, events = _read_stream(args.stream)
    except (OSError, StreamFormatError) as e:
        logger.error(f"Cannot read stream: {e}")
        return EXIT_INPUT
    vertex_ops = [e for e in events if e.op in (UpdateOp.VERTEX_INSERT, UpdateOp.VERTEX_DELETE)]
    if vertex_ops:
        logger.error(f"Update {vertex_ops[0].index}: vertex operations need the simulate command")
        return EXIT_INPUT
    if args.verify and n > settings.verify_max_n:
        logger.warning(f"--verify audits O(n+m) state per update; n={n} will be slow")

    engine = _make_engine(args.algo, n, args.delta_bound)
    records: List[UpdateRecord] = []
    started = time.perf_counter()
    for event in events:
        try:
            report = engine.apply(event)
        except GraphUpdateError as e:
            logger.error(f"Update {event.index} rejected: {e}")
            return EXIT_INPUT
        except InvariantViolationError as e:
            logger.error(f"Update {event.index} broke an invariant: {e}")
            return EXIT_AUDIT

        if args.verify:
            findings = check_mis(engine.snapshot(), engine.members())
            findings += audit_invariants(engine)
            findings += check_report_shape(report)
            if findings:
                logger.error(f"Audit failed after update {event.index} with {len(findings)} finding(s)")
                _emit_findings(findings, err)
                return EXIT_AUDIT
        if args.per_update:
            records.append(UpdateRecord(
                index=report.index,
                removed=report.removed,
                inserted=report.inserted,
                ops=report.ops_spent,
            ))

    ledger = engine.ledger
    summary = RunReport(
        algo=args.algo,
        n=n,
        updates=len(events),
        final_m=engine.edge_count,
        final_mis_size=len(engine.members()),
        total_adjustments=ledger.adjustments,
        max_update_adjustments=ledger.max_update_adjustments,
        total_ops=ledger.total_ops,
        maintenance_ops=ledger.maintenance_ops,
        epochs=ledger.epoch_summaries(),
        violations=ledger.violations,
        wall_time_s=round(time.perf_counter() - started, 6),
    )
    return _print_report(summary, records, out, getattr(args, "report", None))


def cmd_simulate(args, out: Optional[TextIO] = None, err: Optional[TextIO] = None) -> int:
    """Replay a stream through the message-passing simulator and print the run report."""
    out, err = out or sys.stdout, err or sys.stderr
    try:
        n, events = _read_stream(args.stream)
    except (OSError, StreamFormatError) as e:
        logger.error(f"Cannot read stream: {e}")
        return EXIT_INPUT

    records: List[UpdateRecord] = []
    started = time.perf_counter()
    with CongestSimulator(n, parallel=args.parallel or None) as simulator:
        for event in events:
            try:
                metrics = simulator.sim_apply(event)
            except GraphUpdateError as e:
                logger.error(f"Update {event.index} rejected: {e}")
                return EXIT_INPUT
            except SimulationError as e:
                logger.error(f"Update {event.index} broke the protocol: {e}")
                return EXIT_AUDIT

            if args.verify:
                findings = check_mis(simulator.snapshot(), simulator.members()) + audit_simulation(simulator)
                if findings:
                    logger.error(f"Audit failed after update {event.index} with {len(findings)} finding(s)")
                    _emit_findings(findings, err)
                    return EXIT_AUDIT
            if args.per_update:
                records.append(UpdateRecord(
                    index=metrics.index,
                    removed=metrics.removed,
                    inserted=metrics.inserted,
                    ops=metrics.messages,
                    rounds=metrics.total_rounds,
                    messages=metrics.total_messages,
                ))

        totals = simulator.metrics
        summary = RunReport(
            algo="simulate",
            n=n,
            updates=len(events),
            final_m=simulator.edge_count,
            final_mis_size=len(simulator.members()),
            total_adjustments=totals.adjustments,
            max_update_adjustments=max((u.adjustments for u in totals.updates), default=0),
            total_ops=totals.messages,
            rounds=totals.rounds,
            messages=totals.messages,
            violations={
                "procedure": totals.procedure_violations,
                "procedure_overflow": totals.procedure_overflows,
                "round": totals.round_violations,
                "invariant": totals.invariant_violations,
            },
            wall_time_s=round(time.perf_counter() - started, 6),
        )
    return _print_report(summary, records, out, getattr(args, "report", None))


def _print_report(summary: RunReport, records: List[UpdateRecord], out: TextIO, report_path: Optional[str] = None) -> int:
    text = summary.model_dump_json(indent=2) + "\n"
    out.write(text)
    for record in records:
        out.write(record.model_dump_json(exclude_none=True) + "\n")
    if report_path:
        try:
            Path(report_path).write_text(text, encoding="utf-8")
        except OSError as e:
            logger.error(f"Cannot write report: {e}")
            return EXIT_INPUT
        logger.info(f"Wrote run report to {report_path}")
    return EXIT_OK
