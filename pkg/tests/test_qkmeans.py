import math

import numpy as np
import pytest

from locobf import (
    InfeasibleParamsError,
    Location,
    LocationDomain,
    PrivacyParams,
    QkConfig,
    assign_personal_eps,
    assign_round,
    eps_weight,
    qk_partition,
    seed_centers,
    synth_domain,
    weighted_avg_diameter,
)


def test_config_validation():
    QkConfig()
    with pytest.raises(ValueError):
        QkConfig(max_samp=0)
    with pytest.raises(ValueError):
        QkConfig(max_iter=0)
    with pytest.raises(ValueError):
        QkConfig(center_tol=0.0)
    with pytest.raises(ValueError):
        QkConfig(seed=-1)


def test_eps_weight():
    lam = 0.5
    assert eps_weight(1.0, 1.0, lam) == pytest.approx(0.5)
    # a mismatch above the cluster budget costs less than the same
    # mismatch below it, in absolute terms
    assert eps_weight(1.5, 1.0, lam) == pytest.approx(1.5 - 1.0 / 1.5)
    assert eps_weight(0.5, 1.0, lam) == pytest.approx(1.0)
    assert eps_weight(0.5, 1.0, lam) == eps_weight(1.0, 0.5, lam)
    assert eps_weight(100.0, 1.0, lam) == pytest.approx(1.5, abs=0.02)
    with pytest.raises(ValueError):
        eps_weight(0.0, 1.0, lam)


def test_seed_centers_extremes():
    dom = synth_domain(10, seed=0)
    rng = np.random.default_rng(1)
    one = seed_centers(dom, 1, rng)
    assert one.shape == (1, 2)
    assert any(np.allclose(one[0], p) for p in dom.positions)
    rng = np.random.default_rng(2)
    full = seed_centers(dom, 10, rng)
    assert {tuple(c) for c in full.tolist()} == {tuple(p) for p in dom.positions.tolist()}
    with pytest.raises(ValueError):
        seed_centers(dom, 11, rng)


def test_seed_centers_spread():
    """With two tight groups far apart the second center lands opposite."""
    pts = [(0.0, 0.0), (0.1, 0.0), (0.0, 0.1), (0.05, 0.05), (0.1, 0.1), (0.02, 0.08)]
    pts += [(10.0 + x, y) for x, y in pts]
    dom = LocationDomain(
        [Location(i, p, 1.0 / len(pts)) for i, p in enumerate(pts)]
    )
    opposite = 0
    for trial in range(1000):
        centers = seed_centers(dom, 2, np.random.default_rng([7, trial]))
        sides = {centers[0][0] > 5.0, centers[1][0] > 5.0}
        opposite += len(sides) == 2
    assert opposite >= 900


def test_assign_round_single_cluster(line6):
    members, complete = assign_round(
        line6, np.array([[2.5, 0.0]]), PrivacyParams(0.1, 0.4)
    )
    assert complete
    assert sorted(members[0]) == [0, 1, 2, 3, 4, 5]


def test_assign_round_pairs_on_the_line(line6):
    centers = np.array([[0.5, 0.0], [2.5, 0.0], [4.5, 0.0]])
    members, complete = assign_round(line6, centers, PrivacyParams(0.1, 0.4))
    assert complete
    assert [sorted(m) for m in members] == [[0, 1], [2, 3], [4, 5]]


def test_assign_round_unplaceable_leftover():
    """A heavy-prior point at every cluster's sweet spot sinks the round.

    The two flanking pairs close at floor 1.0, and adding the midpoint
    drops either pair's floor to ~0.35, below the 0.95 threshold.
    """
    dom = LocationDomain([
        Location(0, (0.0, 0.0), 0.05),
        Location(1, (2.0, 0.0), 0.05),
        Location(2, (0.0, 6.0), 0.05),
        Location(3, (2.0, 6.0), 0.05),
        Location(4, (1.0, 3.0), 0.80),
    ])
    params = PrivacyParams(0.1, 0.95 / math.exp(0.1))
    centers = np.array([[1.0, 0.0], [1.0, 6.0]])
    members, complete = assign_round(dom, centers, params)
    assert not complete
    assert 4 not in members[0] + members[1]


def test_assign_round_weight_flips_the_join():
    dom = LocationDomain([
        Location(0, (0.0, 0.0), 1 / 3, eps=1.0),
        Location(1, (3.0, 0.0), 1 / 3, eps=5.0),
        Location(2, (1.8, 0.0), 1 / 3, eps=1.0),
    ])
    params = PrivacyParams(1.0, 10.0)  # floor unreachable: nothing closes
    centers = np.array([[0.0, 0.0], [3.0, 0.0]])
    plain, _ = assign_round(dom, centers, params, personalized=True, weighted=False)
    weighted, _ = assign_round(dom, centers, params, personalized=True, weighted=True)
    # id 2 sits nearer the right center but shares a budget with the left
    assert 2 in plain[1]
    assert 2 in weighted[0]


def test_qk_partition_line(line6):
    part = qk_partition(line6, PrivacyParams(0.1, 0.4), QkConfig(seed=0))
    assert part.k == 3
    assert sorted(p.members for p in part.plss) == [(0, 1), (2, 3), (4, 5)]
    assert weighted_avg_diameter(line6, part.plss) == pytest.approx(1.0)
    assert part.provenance.startswith("qk(")


def test_qk_partition_whole_domain_fallback():
    dom = LocationDomain([Location(i, (float(i), 0.0), 0.2) for i in range(5)])
    eps = 0.5
    em = 1.1 / math.exp(eps)  # only the full domain clears this
    part = qk_partition(dom, PrivacyParams(eps, em), QkConfig(seed=0))
    assert part.k == 1
    assert part.plss[0].members == tuple(range(5))


def test_qk_partition_deterministic():
    dom = synth_domain(30, seed=8)
    params = PrivacyParams(1.0, 0.1)
    a = qk_partition(dom, params, QkConfig(max_samp=3, seed=5))
    b = qk_partition(dom, params, QkConfig(max_samp=3, seed=5))
    assert a.plss == b.plss
    assert a.provenance == b.provenance


def test_qk_partition_validates_inputs(line6):
    with pytest.raises(InfeasibleParamsError):
        qk_partition(line6, PrivacyParams(1.0, 10.0))
    with pytest.raises(ValueError, match="budget"):
        qk_partition(line6, PrivacyParams(1.0, 0.1), personalized=True)
    tiny = LocationDomain([Location(0, (0.0, 0.0), 1.0)])
    with pytest.raises(ValueError):
        qk_partition(tiny, PrivacyParams(1.0, 0.0))


def test_qk_personalized_budgets():
    dom = assign_personal_eps(synth_domain(30, seed=8), 0.5, 1.5, seed=2)
    part = qk_partition(
        dom, PrivacyParams(1.0, 0.1), QkConfig(max_samp=3, seed=5), personalized=True
    )
    part.validate(dom)
    for pls in part.plss:
        assert pls.eps_region == pytest.approx(
            float(dom.personal_eps[list(pls.members)].min())
        )
    assert "personalized" in part.provenance
