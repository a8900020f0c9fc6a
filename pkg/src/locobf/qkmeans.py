"""Planar cluster search for protection sets.

Alternative to the curve walk: centers are seeded distance-
proportionally, locations greedily join their nearest still-open
cluster until every cluster passes the error bound, and the cluster
count k grows as long as the mass-weighted mean diameter keeps
improving. With per-location budgets the joining distance is scaled by
a budget-mismatch weight and each cluster's effective budget is the
minimum over its members.
"""

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    InfeasibleParamsError,
    min_mean_distance,
    prior_mass,
    satisfies_error_bound,
)
from .partition import Partition, Pls, require_feasible, _sets_wad

__all__ = ["QkConfig", "eps_weight", "seed_centers", "assign_round", "qk_partition"]


@dataclass(frozen=True)
class QkConfig:
    """Search knobs: restarts per k, center iterations, convergence, seed."""

    max_samp: int = 10
    max_iter: int = 100
    center_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_samp < 1 or self.max_iter < 1:
            raise ValueError("max_samp and max_iter must be >= 1")
        if not self.center_tol > 0:
            raise ValueError("center_tol must be > 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


def eps_weight(eps_a, eps_b, lam):
    """Distance weight for a budget mismatch; ranges over [lam, 1 + lam].

    Equal budgets give the smallest weight (joining preferred); extreme
    mismatch approaches 1 + lam.
    """
    if not (eps_a > 0 and eps_b > 0):
        raise ValueError("budgets must be > 0")
    lo, hi = (eps_a, eps_b) if eps_a <= eps_b else (eps_b, eps_a)
    return 1.0 + lam - lo / hi


def seed_centers(domain, k, rng):
    """Pick k planar centers at location positions.

    The first is uniform over the domain; each next one is drawn from
    the remaining locations with probability proportional to its
    distance to the nearest center already chosen. Falls back to a
    uniform draw if every remaining distance is zero.
    """
    n = domain.n
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got {k}")
    chosen = [int(rng.integers(n))]
    while len(chosen) < k:
        remaining = np.array([i for i in range(n) if i not in set(chosen)])
        weights = domain.distances[np.ix_(remaining, chosen)].min(axis=1)
        total = weights.sum()
        if total > 0:
            pick = rng.choice(remaining, p=weights / total)
        else:
            pick = rng.choice(remaining)
        chosen.append(int(pick))
    return domain.positions[chosen].copy()


def _mismatch_column(domain, base_col, cluster_eps, lam):
    # effective joining distance against a cluster with budget cluster_eps
    weights = 1.0 + lam - np.minimum(domain.personal_eps, cluster_eps) / np.maximum(
        domain.personal_eps, cluster_eps
    )
    return base_col * weights


def assign_round(domain, centers, params, personalized=False, weighted=None):
    """One greedy fill of clusters around fixed planar centers.

    Returns (families, complete): a member-id list per cluster, and
    whether every location found a home. Filling runs in two phases:
    while open clusters remain, the globally nearest (location, open
    cluster) pair joins, and a cluster closes once it has at least two
    members and passes the error bound; once all clusters are closed the
    leftovers join their nearest cluster whose bound survives the
    addition, trying clusters nearest-first. A leftover that breaks
    every cluster marks the round incomplete.
    """
    if weighted is None:
        weighted = personalized
    if personalized and domain.personal_eps is None:
        raise ValueError("personalized assignment needs per-location budgets")
    centers = np.asarray(centers, dtype=float)
    k = len(centers)
    n = domain.n
    em, lam = params.em, params.lam

    base = np.linalg.norm(domain.positions[:, None, :] - centers[None, :, :], axis=2)
    cost = base.copy()
    members = [[] for _ in range(k)]
    cluster_eps = [None] * k
    closed = np.zeros(k, dtype=bool)
    assigned = np.zeros(n, dtype=bool)

    def budget_of(j):
        if personalized:
            return cluster_eps[j]
        return params.eps

    def join(i, j):
        members[j].append(i)
        assigned[i] = True
        if personalized:
            e = float(domain.personal_eps[i])
            if cluster_eps[j] is None or e < cluster_eps[j]:
                cluster_eps[j] = e
                if weighted:
                    cost[:, j] = _mismatch_column(domain, base[:, j], e, lam)

    while not assigned.all() and not closed.all():
        masked = np.where(assigned[:, None] | closed[None, :], np.inf, cost)
        flat = int(masked.argmin())
        i, j = divmod(flat, k)
        join(i, j)
        if len(members[j]) >= 2 and satisfies_error_bound(domain, members[j], budget_of(j), em):
            closed[j] = True

    complete = True
    while not assigned.all():
        # all clusters are closed; leftovers go by plain distance, the
        # budget weight only steers the first phase
        masked = np.where(assigned[:, None], np.inf, base)
        per_loc = masked.min(axis=1)
        i = int(per_loc.argmin())
        placed = False
        for j in np.argsort(base[i], kind="stable"):
            j = int(j)
            trial = members[j] + [i]
            trial_eps = budget_of(j)
            if personalized:
                trial_eps = min(trial_eps, float(domain.personal_eps[i]))
            if satisfies_error_bound(domain, trial, trial_eps, em):
                join(i, j)
                placed = True
                break
        if not placed:
            assigned[i] = True  # keep scanning so the failure is total, not positional
            complete = False
    if not complete:
        return members, False
    return members, True


def _family_eps(domain, family, params, personalized):
    if personalized:
        return [float(domain.personal_eps[list(f)].min()) if f else None for f in family]
    return [params.eps for _ in family]

def _family_feasible(domain, family, params, personalized):
    for f, e in zip(family, _family_eps(domain, family, params, personalized)):
        if len(f) < 2 or not satisfies_error_bound(domain, f, e, params.em):
            return False
    return True


def _search_k(domain, params, config, k, personalized, weighted):
    """Best feasible family over restarts and center iterations, or None."""
    best = None
    best_w = math.inf
    for restart in range(config.max_samp):
        rng = np.random.default_rng([config.seed, k, restart])
        centers = seed_centers(domain, k, rng)
        for _ in range(config.max_iter):
            family, complete = assign_round(domain, centers, params, personalized, weighted)
            if complete and _family_feasible(domain, family, params, personalized):
                w = _sets_wad(domain, family)
                if w < best_w:
                    best, best_w = [list(f) for f in family], w
            new_centers = np.array([
                domain.positions[f].mean(axis=0) if f else centers[j]
                for j, f in enumerate(family)
            ])
            moved = float(np.linalg.norm(new_centers - centers, axis=1).max())
            centers = new_centers
            if moved < config.center_tol:
                break
    return best


def qk_partition(domain, params, config=None, personalized=False, weighted=None):
    """Search k = 1, 2, ... while the weighted mean diameter improves.

    Starts from the whole domain as the single (k=1) fallback, grows k
    while a feasible family exists whose weighted mean diameter does not
    exceed the previous k's, and returns the last accepted family. The
    budget for the feasibility of the whole domain is the minimum
    per-location budget when personalized, the uniform one otherwise.
    """
    if config is None:
        config = QkConfig()
    if weighted is None:
        weighted = personalized
    if personalized and domain.personal_eps is None:
        raise ValueError("personalized partitioning needs per-location budgets")
    if domain.n < 2:
        raise ValueError("partitioning needs at least 2 locations")
    whole_eps = float(domain.personal_eps.min()) if personalized else params.eps
    require_feasible(domain, whole_eps, params.em)

    everyone = list(domain.ids)
    accepted = [everyone]
    accepted_w = _sets_wad(domain, [everyone])
    k = 2
    while k <= domain.n // 2:
        family = _search_k(domain, params, config, k, personalized, weighted)
        if family is None:
            break
        w = _sets_wad(domain, family)
        if w > accepted_w:
            break
        accepted, accepted_w = family, w
        k += 1

    eps_list = _family_eps(domain, accepted, params, personalized)
    plss = tuple(Pls.build(domain, f, e) for f, e in zip(accepted, eps_list))
    mode = "personalized" if personalized else "uniform"
    if personalized and not weighted:
        mode += ",unweighted"
    part = Partition(
        plss, params, f"qk(seed={config.seed},k={len(plss)},{mode})"
    )
    part.validate(domain)
    return part
