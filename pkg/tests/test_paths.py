import numpy as np
import pytest
from scipy.stats import ks_2samp

from sausagelab import (ExitTimeTable, RngStream, build_sausage,
                        dyadic_shell_records, gauss_step_path,
                        sample_exit_time_unit_ball, sample_skeleton,
                        sausage_volume_estimate)

EXACT_MEAN_EXIT = 0.25  # optional stopping of ||B_s||^2 - 4s at the boundary


# ---------------------------------------------------------------------------
# plain paths
# ---------------------------------------------------------------------------

def test_gauss_path_grid_and_variance():
    t, h = 4.0, 0.01
    n = 20_000
    ends = np.empty(n)
    stream = RngStream(10)
    for b in range(4):
        gen = stream.block(b).generator()
        k = int(np.ceil(t / h))
        steps = gen.standard_normal((n // 4, k, 4)) * np.sqrt(h)
        ends[b * (n // 4):(b + 1) * (n // 4)] = steps.sum(axis=1)[:, 0]
    var = ends.var(ddof=1)
    se = var * np.sqrt(2.0 / (n - 1))
    assert abs(var - t) < 4 * se


def test_gauss_path_shape_and_start():
    times, pos = gauss_step_path(RngStream(11), np.array([1.0, 0, 0, 0]),
                                 2.0, 0.1)
    assert times[0] == 0.0 and times[-1] >= 2.0
    assert np.array_equal(pos[0], np.array([1.0, 0, 0, 0]))
    assert pos.shape == (times.size, 4)


def test_gauss_path_martingale_mean():
    start = np.array([3.0, -1.0, 0.0, 2.0])
    n = 4000
    acc = np.zeros(4)
    for b in range(4):
        _, pos = gauss_step_path(RngStream(12).block(b), start, 1.0, 0.01)
        acc += pos[-1]
    # single-path means scatter as sqrt(t)/sqrt(n); crude 4-sigma window
    ends = np.array([gauss_step_path(RngStream(13).block(i), start, 1.0,
                                     0.05)[1][-1] for i in range(400)])
    assert np.all(np.abs(ends.mean(axis=0) - start) < 4.0 / np.sqrt(400))


def test_confinement_tail_shape():
    # log P(sup ||B_s|| > r) should fall off concavely against r^2
    n = 4000
    gen = RngStream(14).generator()
    t, h = 1.0, 0.01
    k = int(t / h)
    steps = gen.standard_normal((n, k, 4)) * np.sqrt(h)
    np.cumsum(steps, axis=1, out=steps)
    sup = np.linalg.norm(steps, axis=2).max(axis=1)
    rs = np.sqrt(np.array([4.0, 6.0, 8.0]))  # equally spaced in r^2
    logp = np.log([max((sup > r).mean(), 1e-12) for r in rs])
    assert logp[0] > logp[1] > logp[2]
    assert (logp[1] - logp[0]) >= (logp[2] - logp[1]) - 0.15


# ---------------------------------------------------------------------------
# exit times
# ---------------------------------------------------------------------------

def test_exit_time_mean_matches_martingale_oracle():
    x = sample_exit_time_unit_ball(RngStream(20), n=120_000)
    assert np.all(x > 0)
    se = x.std(ddof=1) / np.sqrt(x.size)
    assert abs(x.mean() - EXACT_MEAN_EXIT) < max(3 * se, 0.01 * EXACT_MEAN_EXIT)


def test_exit_table_mean_and_determinism():
    table = ExitTimeTable.cached()
    assert abs(table.mean - EXACT_MEAN_EXIT) < 0.005 * EXACT_MEAN_EXIT
    a = table.sample(RngStream(21).generator(), 1000)
    b = table.sample(RngStream(21).generator(), 1000)
    assert np.array_equal(a, b)
    assert np.all(a > 0)


# ---------------------------------------------------------------------------
# skeletons
# ---------------------------------------------------------------------------

def test_skeleton_sampler_reproducible():
    a = sample_skeleton(RngStream(91, 7), np.zeros(4), 12.0, 0.1)
    b = sample_skeleton(RngStream(91, 7), np.zeros(4), 12.0, 0.1)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.times, b.times)


def test_skeleton_hop_distances_exact():
    sk = sample_skeleton(RngStream(22), np.zeros(4), 50.0, 0.1)
    hops = np.linalg.norm(np.diff(sk.points, axis=0), axis=1)
    assert np.abs(hops - 0.1).max() < 1e-12


def test_skeleton_times_and_horizon():
    sk = sample_skeleton(RngStream(23), np.zeros(4), 10.0, 0.2)
    assert sk.times[0] == 0.0
    assert np.all(np.diff(sk.times) > 0)
    assert sk.times[-1] <= 10.0
    w = sk.horizon_weights()
    assert np.all(w > 0)
    assert w.sum() == pytest.approx(10.0)


def test_skeleton_mean_gap():
    # pooled Wald ratio across several paths, ~2e5 gaps
    delta = 0.1
    gaps = np.concatenate([
        sample_skeleton(RngStream(24, i), np.zeros(4), 125.0, delta).gaps
        for i in range(4)])
    assert gaps.size > 150_000
    mean = gaps.mean()
    se = gaps.std(ddof=1) / np.sqrt(gaps.size)
    expect = delta ** 2 / 4
    assert abs(mean - expect) < max(3 * se, 0.01 * expect)


def test_skeleton_point_count():
    delta, t = 0.1, 25.0
    counts = np.array([len(sample_skeleton(RngStream(25, i), np.zeros(4), t,
                                           delta)) for i in range(300)])
    expect = 4 * t / delta ** 2
    assert abs(counts.mean() - expect) / expect < 0.05


def test_skeleton_sandwich_membership():
    gen = np.random.default_rng(3)
    for i in range(20):
        sk = sample_skeleton(RngStream(26, i), np.zeros(4), 5.0, 0.1)
        inner = build_sausage(sk, 1.0)
        outer = build_sausage(sk, 1.1)
        probes = gen.standard_normal((100, 4)) * 3
        inside_inner = inner.contains(probes)
        inside_outer = outer.contains(probes)
        assert np.all(inside_outer[inside_inner])


def test_skeleton_brownian_scaling():
    # scale-lambda skeleton statistics match (delta*lam, t*lam^2) sampling
    lam, t, delta, n = 2.0, 8.0, 0.1, 300
    counts_a = np.empty(n)
    ends_a = np.empty(n)
    counts_b = np.empty(n)
    ends_b = np.empty(n)
    for i in range(n):
        a = sample_skeleton(RngStream(27, i), np.zeros(4), t, delta)
        b = sample_skeleton(RngStream(28, i), np.zeros(4), t * lam ** 2,
                            delta * lam)
        counts_a[i] = len(a)
        ends_a[i] = lam * np.linalg.norm(a.points[-1])
        counts_b[i] = len(b)
        ends_b[i] = np.linalg.norm(b.points[-1])
    for x, y in ((counts_a, counts_b), (ends_a, ends_b)):
        se = np.sqrt(x.var(ddof=1) / n + y.var(ddof=1) / n)
        assert abs(x.mean() - y.mean()) < 3 * se


def test_single_point_skeleton_sausage():
    from sausagelab import PathSkeleton
    sk = PathSkeleton(points=np.zeros((1, 4)), times=np.zeros(1), delta=0.1,
                      horizon=1.0)
    u = build_sausage(sk, 1.0)
    assert len(u) == 1
    assert u.distance(np.array([0.5, 0, 0, 0])) == pytest.approx(-0.5)


# ---------------------------------------------------------------------------
# volume
# ---------------------------------------------------------------------------

def test_volume_single_ball_exact():
    from sausagelab import PathSkeleton
    sk = PathSkeleton(points=np.zeros((1, 4)), times=np.zeros(1), delta=0.1,
                      horizon=1.0)
    est = sausage_volume_estimate(RngStream(29), sk, 1.0, 2000)
    # bounding ball equals the ball itself: every probe lands inside
    assert est.mean == pytest.approx(np.pi ** 2 / 2)
    assert est.std_error == 0.0


def test_volume_determinism():
    sk = sample_skeleton(RngStream(30), np.zeros(4), 20.0, 0.1)
    a = sausage_volume_estimate(RngStream(31), sk, 1.0, 5000)
    b = sausage_volume_estimate(RngStream(31), sk, 1.0, 5000)
    assert a.mean == b.mean and a.std_error == b.std_error


# ---------------------------------------------------------------------------
# dyadic shells
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def shell_records():
    return dyadic_shell_records(RngStream(32), 4000, 100.0, 0.01)


def test_shell_record_invariants(shell_records):
    for rec in shell_records[:200]:
        assert np.all(np.diff(rec.tau) >= 0)
        assert np.all(rec.y >= 0)
        n_t = int(np.searchsorted(rec.tau, 100.0, side="right")) - 1
        assert rec.n_t == n_t
        # the shell containing the horizon is completed
        assert rec.y.size >= rec.n_t + 1


def test_shell_y_iid_ks(shell_records):
    y0 = np.array([r.y[0] for r in shell_records if r.y.size > 0])
    y1 = np.array([r.y[1] for r in shell_records if r.y.size > 1])
    assert ks_2samp(y0, y1).pvalue > 0.01


def test_shell_count_concentration():
    t = 10_000.0
    recs = dyadic_shell_records(RngStream(33), 1500, t, 0.01)
    n_t = np.array([r.n_t for r in recs])
    center = np.log(t) / (2 * np.log(2))
    assert (np.abs(n_t - center) > center / 2).mean() < 0.01


def test_shell_wald_identity(shell_records):
    # E[sum_{i<=N} Y_i] = E[Y_0] E[N+1]; the count includes shell zero.
    u = np.array([r.y[:r.n_t + 1].sum() for r in shell_records])
    v = np.array([r.y[0] for r in shell_records])
    w = np.array([r.n_t + 1.0 for r in shell_records])
    n = u.size
    stat = u.mean() - v.mean() * w.mean()
    cov = np.cov(np.vstack([u, v, w]), ddof=1)
    grad = np.array([1.0, -w.mean(), -v.mean()])
    var = grad @ cov @ grad / n
    assert abs(stat) < 3 * np.sqrt(var)


def test_shell_clip_counter_is_quiet(shell_records):
    # excursions deep toward the pole are rare: ~0 clips per 1e4 paths
    total = sum(r.clip_count for r in shell_records)
    assert total <= 2
