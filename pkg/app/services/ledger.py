import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from app.core.config import settings
from app.models.schemas import AdjustmentReport, EngineKind, EpochConfig, EpochSummary

logger = logging.getLogger(__name__)


@dataclass
class _EpochRow:
    ordinal: int
    epoch: EpochConfig
    engine: EngineKind
    updates: int = 0
    ops: int = 0
    rebuild_ops: int = 0


class CostLedger:
    """
    Counts the work engines do and the bounds they are held to.

    Resolution work (restoring the MIS) and maintenance work (estimates,
    classes, caches) are kept apart; epoch rebuilds are charged to the
    epoch they close.
    """

    def __init__(self):
        self.updates = 0
        self.edge_updates = 0
        self.adjustments = 0
        self.max_update_adjustments = 0
        self.resolution_ops = 0
        self.maintenance_ops = 0
        self.refresh_ops = 0
        self.class_change_ops = 0
        self.rebuild_ops = 0
        self.violations: Dict[str, int] = {
            "core_shape": 0,
            "sweep": 0,
            "monotonicity": 0,
            "ops_bound": 0,
        }
        self.budgets: Dict[int, int] = {}
        self.budget_deficit = 0
        self._epochs: List[_EpochRow] = []

    # Epochs

    def open_epoch(self, epoch: EpochConfig, engine: EngineKind) -> None:
        self._epochs.append(_EpochRow(ordinal=len(self._epochs), epoch=epoch, engine=engine))
        logger.debug(
            f"Epoch {len(self._epochs) - 1} opened at update {epoch.epoch_start_index} "
            f"(m_snapshot={epoch.m_snapshot}, engine={engine.value})"
        )

    def close_epoch(self, rebuild_ops: int) -> None:
        """Charge the rebuild that ends the current epoch to that epoch."""
        self.rebuild_ops += rebuild_ops
        if self._epochs:
            row = self._epochs[-1]
            row.rebuild_ops += rebuild_ops
            row.ops += rebuild_ops

    @property
    def current_epoch(self) -> Optional[EpochConfig]:
        return self._epochs[-1].epoch if self._epochs else None

    def epoch_summaries(self) -> List[EpochSummary]:
        return [
            EpochSummary(
                ordinal=row.ordinal,
                start_index=row.epoch.epoch_start_index,
                m_snapshot=row.epoch.m_snapshot,
                t_high=row.epoch.t_high,
                engine=row.engine,
                updates=row.updates,
                ops=row.ops,
                rebuild_ops=row.rebuild_ops,
            )
            for row in self._epochs
        ]

    # Updates

    def record_update(self, report: AdjustmentReport, edge_update: bool = True) -> None:
        self.updates += 1
        if edge_update:
            self.edge_updates += 1
        self.adjustments += report.adjustments
        self.max_update_adjustments = max(self.max_update_adjustments, report.adjustments)
        self.resolution_ops += report.ops_spent
        if self._epochs:
            row = self._epochs[-1]
            row.updates += 1
            row.ops += report.ops_spent + report.maintenance_ops

    def record_violation(self, name: str, message: str) -> None:
        self.violations[name] = self.violations.get(name, 0) + 1
        logger.warning(f"Bound violation ({name}): {message}")

    # Token accounting: a vertex that leaves the MIS is handed a budget,
    # and spends it when it rejoins.

    def place_budget(self, vertex: int, amount: int) -> None:
        self.budgets[vertex] = amount

    def spend_budget(self, vertex: int) -> None:
        if self.budgets.pop(vertex, None) is None:
            self.budget_deficit += 1

    def clear_budgets(self) -> None:
        self.budgets.clear()

    # Bound checks

    def check_bounds(self, n: int, delta_bound: Optional[int] = None) -> List[str]:
        """
        Compare totals with the amortized bounds.

        Args:
            n: Vertex count of the run
            delta_bound: Declared maximum degree, for delta-engine runs

        Returns:
            Human-readable descriptions of every bound exceeded
        """
        problems: List[str] = []
        k = self.updates
        limit = settings.adjustment_constant * (k + n)
        if self.adjustments > limit:
            problems.append(f"adjustments {self.adjustments} > {limit}")

        limit = settings.refresh_work_constant * max(1, self.edge_updates)
        if self.refresh_ops > limit:
            problems.append(f"refresh work {self.refresh_ops} > {limit}")

        limit = settings.class_change_work_constant * max(1, self.edge_updates)
        if self.class_change_ops > limit:
            problems.append(f"class-change work {self.class_change_ops} > {limit}")

        for row in self._epochs:
            if row.engine is not EngineKind.SUBLINEAR or row.updates == 0:
                continue
            limit = settings.update_ops_constant * row.updates * row.epoch.t_high
            if row.ops > limit:
                problems.append(f"epoch {row.ordinal} ops {row.ops} > {limit}")

        if delta_bound is not None:
            limit = settings.delta_work_constant * max(1, k) * max(1, delta_bound)
            if self.resolution_ops > limit:
                problems.append(f"delta ops {self.resolution_ops} > {limit}")

        for name, count in self.violations.items():
            if count:
                problems.append(f"{count} {name} violation(s)")
        return problems

    def get_stats(self) -> Dict[str, Any]:
        return {
            "updates": self.updates,
            "edge_updates": self.edge_updates,
            "adjustments": self.adjustments,
            "max_update_adjustments": self.max_update_adjustments,
            "resolution_ops": self.resolution_ops,
            "maintenance_ops": self.maintenance_ops,
            "refresh_ops": self.refresh_ops,
            "class_change_ops": self.class_change_ops,
            "rebuild_ops": self.rebuild_ops,
            "epochs": len(self._epochs),
            "budget_deficit": self.budget_deficit,
            "violations": dict(self.violations),
        }

    @property
    def total_ops(self) -> int:
        return self.resolution_ops + self.maintenance_ops + self.rebuild_ops
