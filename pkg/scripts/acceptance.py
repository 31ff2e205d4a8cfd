#!/usr/bin/env python3
"""
Acceptance sweep for the dynamic MIS engines and the simulator.

This script:
1. Generates one random stream per seed
2. Replays it through the sublinear engine, checking the MIS after every update
3. Audits the counters every --audit-every updates (every update by default) and checks the ledger bounds
4. Replays it through the bounded-degree engine with exact counter audits
5. Replays a smaller mixed stream through the simulator and checks its totals
6. Replays a smaller edge stream through the sequential engine and the simulator side by side

Usage:
    python scripts/acceptance.py
    python scripts/acceptance.py --seeds 5 --n 100 --steps 2000
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List

# Add the project root to the Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from app.core.config import settings
from app.models.schemas import UpdateOp
from app.services.congest_sim import CongestSimulator, id_width
from app.services.mis_delta import DeltaEngine
from app.services.mis_sublinear import SublinearEngine
from app.services.oracle import audit_delta, audit_invariants, audit_simulation, check_mis, check_report_shape
from app.services.workload import gen_random, gen_vertex_mix

logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


def sweep_engine(seed: int, n: int, steps: int, audit_every: int) -> List[str]:
    """Run one seed through the sublinear engine and return every problem found."""
    problems: List[str] = []
    engine = SublinearEngine(n)
    for event in gen_random(n, steps, insert_bias=settings.insert_bias, seed=seed):
        report = engine.apply(event)
        findings = check_mis(engine.snapshot(), engine.members()) + check_report_shape(report)
        if (event.index + 1) % audit_every == 0:
            findings += audit_invariants(engine)
        if findings:
            problems.append(f"update {event.index}: {findings[0].kind.value}")
            break

    problems.extend(engine.ledger.check_bounds(n))
    if engine.ledger.budget_deficit:
        problems.append(f"budget deficit {engine.ledger.budget_deficit}")
    stats = engine.ledger.get_stats()
    logger.info(
        f"seed {seed}: {stats['epochs']} epochs, {stats['adjustments']} adjustments, "
        f"max {stats['max_update_adjustments']} per update, {engine.ledger.total_ops} ops"
    )
    return problems


def sweep_simulator(seed: int, n: int, steps: int) -> List[str]:
    """Run a mixed stream through the simulator and check the amortized totals."""
    problems: List[str] = []
    events = gen_vertex_mix(n, steps, vertex_rate=settings.vertex_rate, seed=seed)
    with CongestSimulator(n) as simulator:
        metrics = simulator.sim_run(events)
        problems.extend(f"simulator: {f.kind.value}" for f in check_mis(simulator.snapshot(), simulator.members()))
        problems.extend(f"simulator: {f.kind.value}" for f in audit_simulation(simulator))

    k = max(1, len(events))
    c = settings.adjustment_constant
    if metrics.rounds > c * k:
        problems.append(f"simulator rounds {metrics.rounds} > {c * k}")
    if metrics.messages > c * max(1, metrics.message_budget):
        problems.append(f"simulator messages {metrics.messages} > {c * metrics.message_budget}")
    if metrics.adjustments > c * (k + n):
        problems.append(f"simulator adjustments {metrics.adjustments} > {c * (k + n)}")
    if metrics.max_payload_bits > settings.payload_bits_constant * id_width(n):
        problems.append(f"payload of {metrics.max_payload_bits} bits")
    for name in ("procedure_violations", "round_violations", "invariant_violations"):
        if getattr(metrics, name):
            problems.append(f"simulator {name}={getattr(metrics, name)}")

    logger.info(
        f"simulator seed {seed}: {metrics.rounds} rounds, {metrics.messages} messages, "
        f"{metrics.adjustments} adjustments over {len(events)} updates"
    )
    return problems


def sweep_delta(seed: int, n: int, steps: int) -> List[str]:
    """Run one seed through the bounded-degree engine, held to the peak degree it saw."""
    problems: List[str] = []
    engine = DeltaEngine(n)
    peak = 0
    for event in gen_random(n, steps, insert_bias=settings.insert_bias, seed=seed):
        report = engine.apply(event)
        if event.op is UpdateOp.EDGE_INSERT:
            peak = max(peak, engine.degree(event.u), engine.degree(event.v))
        findings = check_mis(engine.snapshot(), engine.members()) + audit_delta(engine)
        if len(report.removed) > 1:
            problems.append(f"delta update {event.index} removed {len(report.removed)} vertices")
        if findings:
            problems.append(f"delta update {event.index}: {findings[0].kind.value}")
            break

    problems.extend(f"delta: {problem}" for problem in engine.ledger.check_bounds(n, delta_bound=max(1, peak)))
    logger.info(f"delta seed {seed}: peak degree {peak}, {engine.ledger.adjustments} adjustments")
    return problems


def sweep_equivalence(seed: int, n: int, steps: int) -> List[str]:
    """Replay one edge stream through the sequential engine and the simulator side by side."""
    engine = SublinearEngine(n)
    with CongestSimulator(n) as simulator:
        for event in gen_random(n, steps, insert_bias=settings.insert_bias, seed=seed):
            report = engine.apply(event)
            metrics = simulator.sim_apply(event)
            if (sorted(report.removed), sorted(report.inserted)) != (sorted(metrics.removed), sorted(metrics.inserted)):
                return [f"equivalence: update {event.index} adjusted differently"]
            if simulator.members() != engine.members():
                return [f"equivalence: update {event.index} left different members"]
    logger.info(f"equivalence seed {seed}: {steps} updates matched")
    return []


def main() -> int:
    parser = argparse.ArgumentParser(description="Acceptance sweep over seeded random streams")
    parser.add_argument("--seeds", type=int, default=20, help="Number of seeds")
    parser.add_argument("--n", type=int, default=200, help="Vertex count")
    parser.add_argument("--steps", type=int, default=10_000, help="Updates per stream")
    parser.add_argument("--audit-every", type=int, default=1, help="Counter audit period")
    parser.add_argument("--sim-n", type=int, default=128, help="Vertex count for the simulator run")
    parser.add_argument("--sim-steps", type=int, default=5000, help="Updates for the simulator run")
    args = parser.parse_args()

    if args.n > settings.verify_max_n:
        logger.warning(f"n={args.n} is above {settings.verify_max_n}; full checks per update will be slow")
    logger.info(f"Sweeping {args.seeds} seeds at n={args.n}, {args.steps} updates")

    failures = 0
    for seed in range(args.seeds):
        problems = sweep_engine(seed, args.n, args.steps, args.audit_every)
        problems += sweep_delta(seed, args.n, args.steps)
        if seed == 0:
            problems += sweep_simulator(seed, args.sim_n, args.sim_steps)
            problems += sweep_equivalence(seed, args.sim_n, args.sim_steps)
        for problem in problems:
            logger.error(f"❌ seed {seed}: {problem}")
        failures += bool(problems)

    if failures:
        logger.error(f"{failures} of {args.seeds} seeds failed")
        return 1
    logger.info("✅ All seeds passed")
    return 0


if __name__ == "__main__":
    # Load environment variables
    from dotenv import load_dotenv
    load_dotenv()

    sys.exit(main())
