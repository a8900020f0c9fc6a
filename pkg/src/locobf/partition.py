"""Disjoint protection sets and the two-sided curve-walk builder.

A partition splits the domain into disjoint protection sets, each of
which must reach the error floor exp(eps_region) * em. The builder here
walks a Hilbert ordering inward from both ends, closing a set as soon as
it passes the bound, and reconciles whatever is left in the middle.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import (
    InfeasibleParamsError,
    PrivacyParams,
    diameter,
    min_mean_distance,
    prior_mass,
    satisfies_error_bound,
)
from .hilbert import all_rotations

__all__ = [
    "Pls",
    "Partition",
    "weighted_avg_diameter",
    "require_feasible",
    "partition_on_ordering",
    "best_hilbert_partition",
    "save_partition",
    "load_partition",
]


@dataclass(frozen=True)
class Pls:
    """One protection location set with its cached geometry and budget."""

    members: tuple  # sorted location ids
    diam: float
    mass: float
    eps_region: float

    @staticmethod
    def build(domain, members, eps_region):
        members = tuple(sorted(int(m) for m in members))
        if len(members) < 2:
            raise ValueError("a protection set needs at least 2 members")
        if not eps_region > 0:
            raise ValueError("eps_region must be > 0")
        return Pls(
            members,
            diameter(domain, members),
            prior_mass(domain, members),
            float(eps_region),
        )

    @property
    def size(self):
        return len(self.members)


@dataclass(frozen=True)
class Partition:
    """A full disjoint cover of the domain by protection sets.

    ``params`` is None for partitions re-read from disk (the error floor
    is not stored in the file format); provenance records which
    algorithm and inputs produced the object.
    """

    plss: tuple
    params: PrivacyParams | None
    provenance: str

    @property
    def k(self):
        return len(self.plss)

    def pls_of(self):
        """Map location id -> index of its protection set."""
        owner = {}
        for j, pls in enumerate(self.plss):
            for m in pls.members:
                owner[m] = j
        return owner

    def validate(self, domain, check_bound=True):
        """Raise ValueError on any structural or bound violation."""
        seen = set()
        for pls in self.plss:
            if len(pls.members) < 2:
                raise ValueError("protection set smaller than 2 members")
            overlap = seen.intersection(pls.members)
            if overlap:
                raise ValueError(f"location {min(overlap)} appears in two sets")
            seen.update(pls.members)
            if abs(pls.diam - diameter(domain, pls.members)) > 1e-9:
                raise ValueError("cached diameter out of sync with members")
            if abs(pls.mass - prior_mass(domain, pls.members)) > 1e-9:
                raise ValueError("cached mass out of sync with members")
            if check_bound and self.params is not None:
                if not satisfies_error_bound(domain, pls.members, pls.eps_region, self.params.em):
                    raise ValueError(
                        f"protection set {pls.members} misses the error floor"
                    )
        if seen != set(domain.ids):
            raise ValueError("partition does not cover the domain exactly")


def weighted_avg_diameter(domain, plss):
    """Mass-weighted mean diameter of the given protection sets."""
    plss = list(plss)
    if not plss:
        raise ValueError("need at least one protection set")
    total = sum(p.mass for p in plss)
    if not total > 0:
        raise ValueError("protection sets have zero total mass")
    return float(sum(p.mass * p.diam for p in plss) / total)


def _sets_wad(domain, sets):
    # weighted average diameter for raw id-lists (no Pls construction)
    masses = [prior_mass(domain, s) for s in sets]
    total = sum(masses)
    if not total > 0:
        raise ValueError("zero total mass")
    return sum(m * diameter(domain, s) for m, s in zip(masses, sets)) / total


def require_feasible(domain, eps, em):
    """Raise InfeasibleParamsError unless the whole domain passes the bound."""
    if not satisfies_error_bound(domain, domain.ids, eps, em):
        raise InfeasibleParamsError(eps, em, min_mean_distance(domain, domain.ids))


class _Side:
    """A growing run of curve-consecutive locations with cached geometry."""

    def __init__(self, domain):
        self.domain = domain
        self.members = []  # in curve order
        self.diam = 0.0

    def add_right(self, loc):
        if self.members:
            self.diam = max(self.diam, float(self.domain.distances[loc, self.members].max()))
        self.members.append(loc)

    def add_left(self, loc):
        if self.members:
            self.diam = max(self.diam, float(self.domain.distances[loc, self.members].max()))
        self.members.insert(0, loc)

    def satisfies(self, eps, em):
        return satisfies_error_bound(self.domain, self.members, eps, em)

    def min_dist_to(self, loc):
        return float(self.domain.distances[loc, self.members].min())


def partition_on_ordering(domain, ordering, params):
    """Split the domain along one Hilbert ordering.

    Two runs grow inward from the ends of the curve until they pass the
    error bound; the one with the larger diameter is closed and restarted
    whenever at least two locations remain between them. The leftover
    middle is merged, split between its closed neighbours at the cut that
    minimizes their mass-weighted mean diameter, or swallowed by the most
    recently closed set until the bound holds.
    """
    n = domain.n
    if n < 4:
        raise ValueError("partitioning needs at least 4 locations")
    eps, em = params.eps, params.em
    require_feasible(domain, eps, em)
    ranked = ordering.ranked_ids()

    left_closed = []   # id-lists in curve order; also in closing order
    right_closed = []  # id-lists in curve order; right_closed[0] closed last
    close_seq = []     # 'L'/'R' close events, oldest first

    phi_l = _Side(domain)
    phi_l.add_right(ranked[0])
    phi_l.add_right(ranked[1])
    phi_r = _Side(domain)
    phi_r.add_right(ranked[n - 2])
    phi_r.add_right(ranked[n - 1])
    lo, hi = 2, n - 3

    while True:
        while not phi_l.satisfies(eps, em) and lo <= hi:
            phi_l.add_right(ranked[lo])
            lo += 1
        while not phi_r.satisfies(eps, em) and lo <= hi:
            phi_r.add_left(ranked[hi])
            hi -= 1
        if hi - lo + 1 < 2:
            break
        # both sides pass here: growth only stops early when the middle empties
        if phi_l.diam >= phi_r.diam:  # tie closes the left side
            left_closed.append(phi_l.members)
            close_seq.append("L")
            phi_l = _Side(domain)
            phi_l.add_right(ranked[lo])
            phi_l.add_right(ranked[lo + 1])
            lo += 2
        else:
            right_closed.insert(0, phi_r.members)
            close_seq.append("R")
            phi_r = _Side(domain)
            phi_r.add_right(ranked[hi - 1])
            phi_r.add_right(ranked[hi])
            hi -= 2

    if hi == lo:
        # lone middle location joins the side that is nearer in the plane
        loc = ranked[lo]
        if phi_l.min_dist_to(loc) <= phi_r.min_dist_to(loc):
            phi_l.add_right(loc)
        else:
            phi_r.add_left(loc)

    if phi_l.satisfies(eps, em) and phi_r.satisfies(eps, em):
        sets = left_closed + [phi_l.members, phi_r.members] + right_closed
    else:
        remainder = phi_l.members + phi_r.members
        sets = None
        while sets is None:
            if satisfies_error_bound(domain, remainder, eps, em):
                sets = left_closed + [remainder] + right_closed
                break
            cut = _best_remainder_split(domain, remainder, left_closed, right_closed, eps, em)
            if cut is not None:
                if remainder[:cut]:
                    left_closed[-1] = left_closed[-1] + remainder[:cut]
                if remainder[cut:]:
                    right_closed[0] = remainder[cut:] + right_closed[0]
                sets = left_closed + right_closed
                break
            # no valid cut: absorb the most recently closed neighbour and retry
            if not close_seq:
                raise AssertionError("remainder covers the domain yet fails a feasible bound")
            if close_seq.pop() == "L":
                remainder = left_closed.pop() + remainder
            else:
                remainder = remainder + right_closed.pop(0)

    plss = tuple(Pls.build(domain, s, eps) for s in sets)
    part = Partition(
        plss, params, f"hilbert(rotation={ordering.rotation},order={ordering.order})"
    )
    part.validate(domain)
    return part


def _best_remainder_split(domain, remainder, left_closed, right_closed, eps, em):
    """Cut index splitting the remainder between its closed neighbours.

    Tries every contiguous cut (empty halves included). A cut is valid
    when both enlarged neighbours still pass the bound; among valid cuts
    the one with the smallest mass-weighted mean diameter of the two
    neighbours wins. Returns None when no cut is valid or no neighbour
    exists on a needed side.
    """
    left = left_closed[-1] if left_closed else None
    right = right_closed[0] if right_closed else None
    if left is None and right is None:
        return None
    best_cut = None
    best_score = math.inf
    for cut in range(len(remainder) + 1):
        prefix, suffix = remainder[:cut], remainder[cut:]
        if (prefix and left is None) or (suffix and right is None):
            continue
        enlarged = []
        if left is not None:
            enlarged.append(left + prefix)
        if right is not None:
            enlarged.append(suffix + right)
        if not all(satisfies_error_bound(domain, s, eps, em) for s in enlarged):
            continue
        score = _sets_wad(domain, enlarged)
        if score < best_score:
            best_cut, best_score = cut, score
    return best_cut


def best_hilbert_partition(domain, params, order=None, cell_km=1.0):
    """Best of the four rotated curve walks by weighted average diameter.

    Ties keep the earliest rotation (0, 90, 180, 270 order). Raises the
    underlying infeasibility only when every rotation fails.
    """
    best = None
    best_w = math.inf
    first_error = None
    for ordering in all_rotations(domain, order, cell_km):
        try:
            part = partition_on_ordering(domain, ordering, params)
        except InfeasibleParamsError as exc:
            if first_error is None:
                first_error = exc
            continue
        w = weighted_avg_diameter(domain, part.plss)
        if w < best_w:
            best, best_w = part, w
    if best is None:
        raise first_error
    return best


_PART_HEADER = ["pls_id", "location_id", "eps_region", "diam_km"]


def save_partition(partition, stream):
    """Write one membership row per location: pls_id,location_id,eps_region,diam_km."""
    if isinstance(stream, (str, Path)):
        with open(stream, "w", newline="") as fh:
            save_partition(partition, fh)
        return
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(_PART_HEADER)
    for j, pls in enumerate(partition.plss):
        for m in pls.members:
            writer.writerow([j, m, f"{pls.eps_region:.12g}", f"{pls.diam:.12g}"])


def load_partition(domain, source):
    """Re-read a partition CSV against its domain.

    Membership is taken from the file; diameters and masses are
    recomputed and the stored diameter is checked against the recomputed
    one, so a file paired with the wrong dataset fails loudly.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return load_partition(domain, fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header] != _PART_HEADER:
        raise ValueError("partition header must be pls_id,location_id,eps_region,diam_km")
    members = {}
    eps_of = {}
    diam_of = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise ValueError(f"line {lineno}: expected 4 fields")
        try:
            pls_id = int(row[0])
            loc_id = int(row[1])
            eps_region = float(row[2])
            diam = float(row[3])
        except ValueError:
            raise ValueError(f"line {lineno}: malformed numeric field") from None
        members.setdefault(pls_id, []).append(loc_id)
        if pls_id in eps_of and (eps_of[pls_id] != eps_region or diam_of[pls_id] != diam):
            raise ValueError(f"line {lineno}: inconsistent eps_region or diam_km for set {pls_id}")
        eps_of[pls_id] = eps_region
        diam_of[pls_id] = diam
    if sorted(members) != list(range(len(members))):
        raise ValueError("pls_id values must be exactly 0..k-1")
    plss = []
    for pls_id in sorted(members):
        pls = Pls.build(domain, members[pls_id], eps_of[pls_id])
        if not np.isclose(pls.diam, diam_of[pls_id], rtol=1e-6, atol=1e-9):
            raise ValueError(
                f"set {pls_id}: stored diameter {diam_of[pls_id]} does not match "
                f"the dataset ({pls.diam:.12g})"
            )
        plss.append(pls)
    part = Partition(tuple(plss), None, "file")
    part.validate(domain, check_bound=False)
    return part
