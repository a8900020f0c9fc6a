"""Bayesian adversary against a release matrix.

Given the prior and the matrix, the adversary forms the posterior over
true locations for each observed pseudo-location and attacks it either
by minimizing expected distance (the optimal attack) or by taking the
posterior mode (the Bayesian attack). The metrics here quantify what
those attacks achieve and what the mechanism costs in utility.
"""

import csv
from pathlib import Path
from dataclasses import dataclass

import numpy as np

__all__ = [
    "posterior",
    "optimal_attack",
    "bayes_attack",
    "conditional_error",
    "expected_error",
    "quality_loss",
    "avg_error",
    "success_prob",
    "MetricsReport",
    "compute_metrics",
    "save_metrics",
    "load_metrics",
]


def _posterior_columns(domain, matrix):
    """Posterior matrix (true x pseudo) and the pseudo marginal."""
    weighted = domain.priors[:, None] * matrix.rows
    marginal = weighted.sum(axis=0)
    if (marginal <= 0).any():
        raise ValueError("some pseudo-location is never reported; posterior undefined")
    return weighted / marginal[None, :], marginal


def posterior(domain, matrix, pseudo_id):
    """Posterior over true locations given one observed pseudo-location."""
    if not 0 <= pseudo_id < matrix.n:
        raise ValueError(f"unknown pseudo-location id {pseudo_id}")
    weighted = domain.priors * matrix.rows[:, pseudo_id]
    total = weighted.sum()
    if not total > 0:
        raise ValueError(f"pseudo-location {pseudo_id} is never reported")
    return weighted / total


def optimal_attack(domain, post):
    """Estimate minimizing posterior-expected distance; ties pick the lowest id."""
    costs = domain.distances @ np.asarray(post, dtype=float)
    return int(costs.argmin())


def bayes_attack(post):
    """Posterior mode; ties pick the lowest id."""
    return int(np.asarray(post).argmax())


def conditional_error(domain, matrix, pseudo_id):
    """Expected distance achieved by the optimal attack on one pseudo-location."""
    post = posterior(domain, matrix, pseudo_id)
    return float((domain.distances @ post).min())


def expected_error(domain, matrix):
    """Mean optimal-attack distance over the pseudo-location marginal."""
    post, marginal = _posterior_columns(domain, matrix)
    per_pseudo = (domain.distances @ post).min(axis=0)
    return float(per_pseudo @ marginal)


def quality_loss(domain, matrix):
    """Prior-weighted mean distance between true and reported locations."""
    return float((domain.priors[:, None] * matrix.rows * domain.distances).sum())


def _optimal_attack_ids(domain, matrix):
    post, _ = _posterior_columns(domain, matrix)
    return (domain.distances @ post).argmin(axis=0)


def avg_error(domain, matrix, true_id):
    """Expected optimal-attack distance when the true location is known."""
    if not 0 <= true_id < matrix.n:
        raise ValueError(f"unknown location id {true_id}")
    attack = _optimal_attack_ids(domain, matrix)
    return float(matrix.rows[true_id] @ domain.distances[attack, true_id])


def success_prob(domain, matrix, true_id):
    """Probability that the Bayesian attack names the true location exactly.

    The complementary value, the chance the posterior mode misses, is
    simply 1 minus this.
    """
    if not 0 <= true_id < matrix.n:
        raise ValueError(f"unknown location id {true_id}")
    post, _ = _posterior_columns(domain, matrix)
    mode = post.argmax(axis=0)
    return float(matrix.rows[true_id][mode == true_id].sum())


@dataclass(frozen=True)
class MetricsReport:
    """Scalar and per-id adversary metrics for one (domain, matrix) pair."""

    exp_err: float
    qloss: float
    cond_err: np.ndarray  # per pseudo-location
    avg_err: np.ndarray   # per true location
    success: np.ndarray   # per true location

    NAMES = ("exp_err", "qloss", "cond_err", "avg_err", "success")


def compute_metrics(domain, matrix):
    """All adversary metrics in one vectorized pass."""
    post, marginal = _posterior_columns(domain, matrix)
    attack_costs = domain.distances @ post
    cond = attack_costs.min(axis=0)
    attack = attack_costs.argmin(axis=0)
    mode = post.argmax(axis=0)
    exp_err = float(cond @ marginal)
    qloss = float((domain.priors[:, None] * matrix.rows * domain.distances).sum())
    avg = (matrix.rows * domain.distances[attack, :].T).sum(axis=1)
    hit = mode[None, :] == np.arange(matrix.n)[:, None]
    success = (matrix.rows * hit).sum(axis=1)
    return MetricsReport(exp_err, qloss, cond, avg, success)


def save_metrics(report, stream, metrics=None):
    """Write metric,location_or_pseudo_id,value rows; scalars leave the id blank."""
    chosen = MetricsReport.NAMES if metrics is None else tuple(metrics)
    unknown = [m for m in chosen if m not in MetricsReport.NAMES]
    if unknown:
        raise ValueError(
            f"unknown metric name {unknown[0]!r}; valid names: {', '.join(MetricsReport.NAMES)}"
        )
    if isinstance(stream, (str, Path)):
        with open(stream, "w", newline="") as fh:
            save_metrics(report, fh, metrics)
        return
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["metric", "location_or_pseudo_id", "value"])
    for name in chosen:
        value = getattr(report, name)
        if np.ndim(value) == 0:
            writer.writerow([name, "", f"{float(value):.12g}"])
        else:
            for i, v in enumerate(value):
                writer.writerow([name, i, f"{float(v):.12g}"])


def load_metrics(source):
    """Read back a metrics CSV into {metric: scalar or id->value dict}."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return load_metrics(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header != ["metric", "location_or_pseudo_id", "value"]:
        raise ValueError("metrics header must be metric,location_or_pseudo_id,value")
    out = {}
    for row in reader:
        if not row:
            continue
        name, loc, value = row[0], row[1], float(row[2])
        if name not in MetricsReport.NAMES:
            raise ValueError(f"unknown metric name {name!r} in file")
        if loc == "":
            out[name] = value
        else:
            out.setdefault(name, {})[int(loc)] = value
    return out
