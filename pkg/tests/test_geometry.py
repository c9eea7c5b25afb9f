import numpy as np
import pytest

from sausagelab import (Ball, BallUnion, RngStream, ball4_capacity,
                        ball4_volume, ball_hit_prob, cond_hit_bound,
                        dist_to_union, green_g, gstar, shared_ball_union,
                        sphere_sample)
from sausagelab.geometry import GREEN_COEFF, ball_sample

TWO_PI_SQ = 2.0 * np.pi ** 2


# ---------------------------------------------------------------------------
# Green kernel
# ---------------------------------------------------------------------------

def test_green_at_unit_norm():
    assert green_g(np.array([1.0, 0, 0, 0])) == pytest.approx(1 / TWO_PI_SQ)
    assert green_g(np.array([0, 2.0, 0, 0])) == pytest.approx(1 / (8 * np.pi ** 2))


def test_green_scaling_invariance():
    gen = np.random.default_rng(0)
    for _ in range(50):
        x = gen.standard_normal(4)
        lam = float(gen.uniform(0.1, 10.0))
        lhs = lam ** 2 * green_g(lam * x)
        rhs = green_g(x)
        assert abs(lhs - rhs) / rhs < 1e-12


def test_green_pole_raises():
    with pytest.raises(ValueError):
        green_g(np.zeros(4))


# ---------------------------------------------------------------------------
# averaged kernel gstar
# ---------------------------------------------------------------------------

def test_gstar_closed_form_points():
    assert gstar(2.0) == pytest.approx(1 / 16)
    assert gstar(0.0) == pytest.approx(0.5)
    assert gstar(1.0) == pytest.approx(0.25)
    # both branches meet at rho = 1
    assert gstar(1.0 - 1e-12) == pytest.approx(gstar(1.0 + 1e-12), abs=1e-9)


def test_gstar_monotone_and_matches_green_outside():
    rho = np.linspace(0.0, 5.0, 400)
    vals = gstar(rho)
    assert np.all(np.diff(vals) <= 1e-15)
    out = rho[rho > 1.0]
    expect = (np.pi ** 2 / 2) * GREEN_COEFF / out ** 2
    assert np.allclose(gstar(out), expect, rtol=1e-12)


def _gstar_quadrature_oracle(rho: float, n: int, gen) -> tuple[float, float]:
    """MC quadrature of the ball-averaged Green integral.

    Importance-samples w with density proportional to the integrand
    (radially linear in ||w||) over an enclosing ball of radius L, which
    turns the integral into L^2/2 times a Bernoulli hit probability: a
    bounded-variance oracle that never touches the closed form.
    """
    L = rho + 1.0
    dirs = gen.standard_normal((n, 4))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    w = dirs * (L * np.sqrt(gen.random(n)))[:, None]
    z = np.array([rho, 0.0, 0.0, 0.0])
    inside = np.linalg.norm(w - z, axis=1) <= 1.0
    p = inside.mean()
    scale = L * L / 2.0
    return scale * p, scale * np.sqrt(max(p * (1 - p), 0.0) / n)


def test_gstar_against_quadrature_oracle():
    gen = np.random.default_rng(2024)
    # interior-branch certification grid plus radii across the kink
    for rho in (0.0, 0.25, 0.5, 0.75, 1.0, 1.3, 1.7, 2.0, 2.5, 3.0):
        est, se = _gstar_quadrature_oracle(rho, 400_000, gen)
        assert abs(est - gstar(rho)) <= 3.0 * se + 1e-12, rho


# ---------------------------------------------------------------------------
# ball hitting and the conditional bound
# ---------------------------------------------------------------------------

def test_ball_hit_prob_values():
    assert ball_hit_prob(np.array([2.0, 0, 0, 0]), 1.0) == pytest.approx(0.25)
    assert ball_hit_prob(np.array([1.0, 0, 0, 0]), 1.0) == 1.0
    assert ball_hit_prob(np.array([0.5, 0, 0, 0]), 1.0) == 1.0
    for norm in (10.0, 100.0, 1e4):
        z = np.array([norm, 0, 0, 0])
        assert ball_hit_prob(z, 3.0) * norm ** 2 == pytest.approx(9.0)


def test_cond_hit_bound():
    assert cond_hit_bound(TWO_PI_SQ, 1.0) == pytest.approx(1.0)
    assert cond_hit_bound(0.0, 2.0) == 0.0
    # unit ball seen from ||z|| = 2: bound 1 >= exact 1/4
    assert cond_hit_bound(TWO_PI_SQ, 1.0) >= 0.25
    with pytest.raises(ValueError):
        cond_hit_bound(1.0, 0.0)


def test_ball4_constants():
    assert ball4_volume(1.0) == pytest.approx(np.pi ** 2 / 2)
    assert ball4_capacity(1.0) == pytest.approx(TWO_PI_SQ)
    # covering constant Cap(B(0,4)) / |B(0,4/3)|
    assert ball4_capacity(4.0) / ball4_volume(4.0 / 3.0) == pytest.approx(20.25)


# ---------------------------------------------------------------------------
# union of balls
# ---------------------------------------------------------------------------

def test_dist_single_ball():
    u = BallUnion(np.zeros((1, 4)), 1.0)
    assert u.distance(np.array([3.0, 0, 0, 0])) == pytest.approx(2.0)
    assert u.distance(np.zeros(4)) == pytest.approx(-1.0)


def test_dist_empty_union_sentinel():
    u = BallUnion(np.zeros((0, 4)), 1.0)
    assert u.is_empty
    assert dist_to_union(np.zeros(4), u) == np.inf


def test_indexed_distance_matches_brute_force_exactly():
    gen = np.random.default_rng(7)
    for trial in range(10):
        n = int(gen.integers(100, 1200))
        centers = gen.standard_normal((n, 4)) * gen.uniform(1, 20)
        u = BallUnion(centers, float(gen.uniform(0.2, 2.0)))
        q = gen.standard_normal((1000, 4)) * 25
        assert np.array_equal(u.distances(q), u.brute_force_distances(q))


def test_bounding_radius_contains_every_center():
    gen = np.random.default_rng(8)
    centers = gen.standard_normal((60, 4)) * 5
    u = BallUnion(centers, 0.7)
    norms = np.linalg.norm(centers, axis=1)
    assert np.all(u.bounding_radius >= norms + 0.7 - 1e-12)


def test_translation():
    u = BallUnion(np.zeros((1, 4)), 1.0)
    v = u.translated([1.0, 0, 0, 0])
    assert v.distance(np.array([1.0, 0, 0, 0])) == pytest.approx(-1.0)


def test_ball_validation():
    with pytest.raises(ValueError):
        Ball(np.zeros(4), 0.0)
    with pytest.raises(ValueError):
        BallUnion(np.zeros((1, 4)), -1.0)


def test_shared_ball_union_cases():
    a = BallUnion(np.array([[0.0, 0, 0, 0], [3.0, 0, 0, 0]]), 1.0)
    b = BallUnion(np.array([[0.0, 0, 0, 0], [-3.0, 0, 0, 0]]), 1.0)
    s = shared_ball_union(a, b)
    assert len(s) == 1 and s.radius == 1.0
    # nested: small ball inside a big one
    small = BallUnion(np.array([[0.5, 0, 0, 0]]), 0.5)
    big = BallUnion(np.zeros((1, 4)), 2.0)
    s2 = shared_ball_union(small, big)
    assert len(s2) == 1 and s2.radius == 0.5
    # partial lens is not representable
    with pytest.raises(ValueError):
        shared_ball_union(BallUnion(np.zeros((1, 4)), 1.0),
                          BallUnion(np.array([[1.0, 0, 0, 0]]), 1.0))


# ---------------------------------------------------------------------------
# sphere sampling
# ---------------------------------------------------------------------------

def test_sphere_sample_radius_exact():
    pts = sphere_sample(RngStream(3), np.array([1.0, 2.0, 3.0, 4.0]), 2.5,
                        n=5000)
    r = np.linalg.norm(pts - np.array([1.0, 2.0, 3.0, 4.0]), axis=1)
    assert np.abs(r - 2.5).max() < 1e-12 * 2.5


def test_sphere_sample_moments():
    n = 1_000_000
    pts = sphere_sample(RngStream(4), np.zeros(4), 1.0, n=n)
    # mean -> 0 within 4 standard errors per coordinate (se = 1/(2 sqrt n))
    se_mean = 0.5 / np.sqrt(n)
    assert np.all(np.abs(pts.mean(axis=0)) < 4 * se_mean)
    # isotropy: E[x0^2] = 1/4
    m2 = (pts[:, 0] ** 2).mean()
    se2 = (pts[:, 0] ** 2).std(ddof=1) / np.sqrt(n)
    assert abs(m2 - 0.25) < 4 * se2


def test_ball_sample_inside():
    pts = ball_sample(RngStream(5).generator(), np.zeros(4), 2.0, 2000)
    assert np.all(np.linalg.norm(pts, axis=1) <= 2.0)
