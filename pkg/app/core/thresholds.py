"""Epoch arithmetic: integer roots, class thresholds and the factor-2 drift rule."""
from math import isqrt

from app.models.schemas import DegreeClass, EpochConfig


def floor_fourth_root(x: int) -> int:
    """Largest r with r**4 <= x."""
    if x < 0:
        raise ValueError(f"Cannot take the root of a negative number: {x}")
    return isqrt(isqrt(x))


def ceil_sqrt(x: int) -> int:
    r = isqrt(x)
    return r if r * r == x else r + 1


def ceil_fourth_root(x: int) -> int:
    r = floor_fourth_root(x)
    return r if r ** 4 == x else r + 1


def make_epoch(edge_count: int, start_index: int = 0) -> EpochConfig:
    """
    Freeze an edge count into an epoch.

    Args:
        edge_count: Live edge count at the epoch start (0 is treated as 1)
        start_index: Global update index at which the epoch begins

    Returns:
        EpochConfig with thresholds ceil(m^3/4), ceil(m^1/2), ceil(m^1/4)
    """
    m = max(1, edge_count)
    return EpochConfig(
        m_snapshot=m,
        t_high=ceil_fourth_root(m ** 3),
        t_medhigh=ceil_sqrt(m),
        t_medlow=ceil_fourth_root(m),
        epoch_start_index=start_index,
    )


def epoch_expired(edge_count: int, m_snapshot: int) -> bool:
    """Strict factor-2 drift test; equality stays in the epoch."""
    m = max(1, edge_count)
    return m > 2 * m_snapshot or 2 * m < m_snapshot


def classify(degree_est: int, epoch: EpochConfig) -> DegreeClass:
    if degree_est >= epoch.t_high:
        return DegreeClass.HIGH
    if degree_est >= epoch.t_medhigh:
        return DegreeClass.MED_HIGH
    if degree_est >= epoch.t_medlow:
        return DegreeClass.MED_LOW
    return DegreeClass.LOW
