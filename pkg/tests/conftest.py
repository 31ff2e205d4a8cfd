from typing import List, Tuple

import pytest

from app.models.schemas import UpdateEvent, UpdateOp


def _edge_events(updates: List[Tuple[str, int, int]]) -> List[UpdateEvent]:
    ops = {"+": UpdateOp.EDGE_INSERT, "-": UpdateOp.EDGE_DELETE}
    return [UpdateEvent(index=i, op=ops[sign], u=u, v=v) for i, (sign, u, v) in enumerate(updates)]


@pytest.fixture
def make_events():
    """Build indexed edge events from ('+'|'-', u, v) triples."""
    return _edge_events


@pytest.fixture
def star_updates():
    """Center 0 with leaves 1..4; vertex 5 stays isolated."""
    return [("+", 0, leaf) for leaf in range(1, 5)]


@pytest.fixture
def path_edges():
    return [(0, 1), (1, 2), (2, 3), (3, 4)]
