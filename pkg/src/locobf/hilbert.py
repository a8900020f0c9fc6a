"""Hilbert-curve ranking of domain locations, with the four rotated walks.

Locations are snapped to a square cell grid over the domain's bounding
box and ordered by their position along a Hilbert walk of that grid. The
walk of order m covers a 2^m x 2^m grid, starting in the lower-left cell
and ending in the lower-right one; the 90/180/270 degree variants rotate
the snapped cells about the grid center before ranking.
"""

from dataclasses import dataclass

__all__ = [
    "ROTATIONS",
    "HilbertOrdering",
    "hilbert_rank",
    "hilbert_cell",
    "rotate_cell",
    "default_order",
    "order_domain",
    "all_rotations",
]

ROTATIONS = (0, 90, 180, 270)


def hilbert_rank(cell_x, cell_y, order):
    """Index of cell (cell_x, cell_y) along the order-``order`` Hilbert walk."""
    side = 1 << order
    if not (0 <= cell_x < side and 0 <= cell_y < side):
        raise ValueError(f"cell ({cell_x}, {cell_y}) outside the {side}x{side} grid")
    x, y = cell_x, cell_y
    rank = 0
    s = side >> 1
    while s > 0:
        rx = 1 if x & s else 0
        ry = 1 if y & s else 0
        rank += s * s * ((3 * rx) ^ ry)
        x, y = _fold(side, x, y, rx, ry)
        s >>= 1
    return rank


def hilbert_cell(rank, order):
    """Inverse of hilbert_rank: the (x, y) cell at the given walk index."""
    side = 1 << order
    if not (0 <= rank < side * side):
        raise ValueError(f"rank {rank} outside the order-{order} walk")
    x = y = 0
    t = rank
    s = 1
    while s < side:
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        x, y = _fold(s, x, y, rx, ry)
        x += s * rx
        y += s * ry
        t //= 4
        s <<= 1
    return x, y


def _fold(span, x, y, rx, ry):
    # quadrant reflection/transpose shared by both walk directions
    if ry == 0:
        if rx == 1:
            x = span - 1 - x
            y = span - 1 - y
        x, y = y, x
    return x, y


def rotate_cell(cell, side, rotation):
    """Rotate a grid cell about the center of a side x side grid."""
    x, y = cell
    if rotation == 0:
        return x, y
    if rotation == 90:
        return y, side - 1 - x
    if rotation == 180:
        return side - 1 - x, side - 1 - y
    if rotation == 270:
        return side - 1 - y, x
    raise ValueError(f"rotation must be one of {ROTATIONS}, got {rotation}")


@dataclass(frozen=True)
class HilbertOrdering:
    """A total order of location ids along one rotated Hilbert walk."""

    rotation: int
    order: int
    ranks: dict  # id -> dense rank in 0..n-1

    def ranked_ids(self):
        """Ids sorted by rank, i.e. the traversal order."""
        return sorted(self.ranks, key=self.ranks.__getitem__)


def default_order(domain, cell_km=1.0):
    """Smallest order whose grid spans the bounding box at cell_km resolution."""
    if not cell_km > 0:
        raise ValueError("cell_km must be > 0")
    spans = domain.positions.max(axis=0) - domain.positions.min(axis=0)
    span = float(spans.max())
    m = 0
    while (1 << m) < span / cell_km:
        m += 1
    return m


def order_domain(domain, order=None, rotation=0, cell_km=1.0):
    """Rank all domain locations along one rotated Hilbert walk.

    Cells are square with side cell_km, anchored at the bounding-box
    minimum; locations beyond the grid edge clamp into the last cell and
    cell ties break by location id, so the result is always a bijection
    onto 0..n-1.
    """
    if rotation not in ROTATIONS:
        raise ValueError(f"rotation must be one of {ROTATIONS}, got {rotation}")
    if domain.n == 1:
        return HilbertOrdering(rotation, order if order is not None else 0, {0: 0})
    mins = domain.positions.min(axis=0)
    spans = domain.positions.max(axis=0) - mins
    if not float(spans.max()) > 0:
        raise ValueError("degenerate bounding box: all locations coincide")
    if order is None:
        order = default_order(domain, cell_km)
    side = 1 << order
    keyed = []
    for loc in domain.locations:
        cx = min(int((loc.pos[0] - mins[0]) / cell_km), side - 1)
        cy = min(int((loc.pos[1] - mins[1]) / cell_km), side - 1)
        rx, ry = rotate_cell((cx, cy), side, rotation)
        keyed.append((hilbert_rank(rx, ry, order), loc.id))
    keyed.sort()
    ranks = {loc_id: rank for rank, (_, loc_id) in enumerate(keyed)}
    return HilbertOrdering(rotation, order, ranks)


def all_rotations(domain, order=None, cell_km=1.0):
    """The four rotated orderings, all at the same grid order."""
    if order is None and domain.n > 1:
        spans = domain.positions.max(axis=0) - domain.positions.min(axis=0)
        if float(spans.max()) > 0:
            order = default_order(domain, cell_km)
    return tuple(order_domain(domain, order, rot, cell_km) for rot in ROTATIONS)
