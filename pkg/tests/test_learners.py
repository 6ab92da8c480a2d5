import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import freegrad_bound, psi_reference

from pfoco.geometry import EuclideanBall, LpBall, cube
from pfoco.learners import (
    FTL,
    OGD,
    ComparatorAdaptive,
    ConstrainedFreeGrad,
    FreeGrad,
    FreeGrad1D,
    MainAlgorithm,
    ParameterError,
    SleepingExperts,
    default_eta,
    ftsl_new,
    psi,
)
from pfoco.oracles import CountingOracle

grads1d = st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=60)
vec2 = st.tuples(st.floats(-1, 1), st.floats(-1, 1)).map(np.array)


# psi


def test_psi_examples():
    assert psi(0, 1, 1) == pytest.approx(1.0, rel=1e-15)
    assert psi(1, 1, 1) == pytest.approx(0.375 * math.exp(0.25), rel=1e-12)
    assert psi(1, 1, 1) == pytest.approx(0.481510, abs=1e-6)


@given(st.floats(-50, 50), st.floats(1e-3, 100), st.floats(0.1, 10))
def test_psi_matches_formula_and_is_even(s, v, L):
    assert psi(s, v, L) == pytest.approx(psi_reference(s, v, L), rel=1e-10)
    assert psi(s, v, L) == psi(-s, v, L)


def test_psi_domain_and_saturation():
    with pytest.raises(ValueError):
        psi(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        psi(1.0, 1.0, 0.0)
    assert math.isfinite(psi(1e6, 1.0, 1.0))


# FreeGrad


def test_freegrad_examples():
    fg = FreeGrad1D(1.0)
    fg.feed(0.0)
    assert fg.next() == 0.0
    fg.feed(1.0)
    assert (fg.G, fg.V) == (1.0, 1.0)
    assert fg.next() == pytest.approx(-0.375 * math.exp(0.25), rel=1e-12)
    fg.feed(-1.0)
    assert fg.G == 0.0 and fg.next() == 0.0


def test_freegrad_rejects_large_gradient():
    with pytest.raises(ParameterError):
        FreeGrad1D(1.0).feed(1.5)
    with pytest.raises(ParameterError):
        FreeGrad1D(1.0, v0=-1.0)


def test_origin_regret_is_unbounded_without_starting_variance():
    # A tiny first gradient makes the next play of order 1/g.
    for g1, expected_min in ((1e-2, 40.0), (1e-3, 400.0)):
        fg, reg = FreeGrad1D(1.0), 0.0
        for g in (g1, -1.0):
            reg += g * fg.next()
            fg.feed(g)
        assert reg > expected_min


@given(grads1d)
def test_freegrad_bound_with_starting_variance(gs):
    fg = FreeGrad1D(1.0, v0=1.0)
    zs = []
    for g in gs:
        zs.append(fg.next())
        fg.feed(g)
    g = np.array(gs)
    V = 1.0 + float(g @ g)  # the starting variance counts toward V
    loss = float(g @ np.array(zs))
    for z in (0.0, 0.25, -0.25, 1.0, -1.0):
        assert loss - z * g.sum() <= freegrad_bound(z, V, 1.0) + 1e-9


def test_freegrad_vector_matches_1d_in_one_dimension():
    a, b = FreeGrad(1, 1.0), FreeGrad1D(1.0)
    for g in (0.3, -0.7, 0.1):
        a.feed([g])
        b.feed(g)
        assert a.next()[0] == pytest.approx(b.next())


@given(st.lists(vec2, min_size=1, max_size=30))
def test_constrained_freegrad_stays_inside(gs):
    body = cube(1.0)
    learner = ConstrainedFreeGrad(CountingOracle(body), 1.0)
    for g in gs:
        g = g / max(1.0, float(np.linalg.norm(g)))
        learner.feed(g)
        assert body.membership(learner.next(), 1e-9)


# FTL


def test_ftl_first_play_is_origin_and_one_call_per_round():
    o = CountingOracle(EuclideanBall(1.0))
    ftl = FTL(o)
    assert np.array_equal(ftl.next(), [0, 0])
    ftl.feed([1, 0])
    ftl.feed([1, 0])
    assert np.allclose(ftl.next(), [-1, 0])
    assert np.allclose(ftl.grad_sum, [2, 0])
    assert o.loo_calls == 2


# comparator-adaptive wrapper


def test_wrapper_starts_at_origin():
    ca = ftsl_new(CountingOracle(EuclideanBall(1.0)), 1.0)
    assert np.array_equal(ca.next(), [0, 0])


def test_wrapper_one_round_by_hand():
    ca = ftsl_new(CountingOracle(EuclideanBall(1.0)), 1.0)
    ca.feed([1.0, 0.0])
    # The first scalar loss is <w_1, g> = 0, so z stays 0 and u_2 = 0 * w_2.
    assert np.allclose(ca.last_w, [-1, 0])
    assert ca.oned.next() == 0.0
    assert np.allclose(ca.next(), [0, 0])
    ca.feed([1.0, 0.0])
    # Now the scalar loss is <(-1, 0), (1, 0)> = -1 and the 1-d scale is 2RL = 2.
    z = 1.0 * psi(-1.0, 1.0, 2.0)
    assert ca.oned.next() == pytest.approx(z)
    assert np.allclose(ca.next(), min(1.0, z) * np.array([-1, 0]))


def test_wrapper_plays_origin_when_factor_clips_to_zero():
    ca = ftsl_new(CountingOracle(EuclideanBall(1.0)), 1.0)
    ca.feed([1.0, 0.0])
    ca.feed([-1.0, 0.0])  # pushes z negative
    assert ca.oned.next() < 0
    assert np.array_equal(ca.next(), [0, 0])


def test_wrapper_zero_gradients_keep_origin():
    ca = ftsl_new(CountingOracle(cube(1.0)), 1.0)
    for _ in range(5):
        ca.feed([0.0, 0.0])
        assert np.array_equal(ca.next(), [0, 0])


@given(st.lists(vec2, min_size=1, max_size=40))
def test_wrapper_origin_regret_with_starting_variance(gs):
    body = EuclideanBall(1.0)
    ca = ComparatorAdaptive(FTL(CountingOracle(body)), 1.0, body.R, clip=False, v0=1.0)
    reg = 0.0
    for g in gs:
        g = g / max(1.0, float(np.linalg.norm(g)))
        reg += float(g @ ca.next())
        ca.feed(g)
    assert reg <= 1.0 + 1e-9


@given(st.lists(vec2, min_size=1, max_size=40))
def test_clipped_wrapper_stays_inside(gs):
    body = LpBall(1.5)
    ca = ftsl_new(CountingOracle(body), 1.0)
    for g in gs:
        ca.feed(g / max(1.0, float(np.linalg.norm(g))))
        assert body.membership(ca.next(), 1e-9)
        assert 0.0 <= ca.factor() <= 1.0


# main algorithm


def make_main(T=100, mu=1.0, body=None, L=1.0):
    body = body or EuclideanBall(1.0)
    o = CountingOracle(body)
    alg = MainAlgorithm(lambda: ftsl_new(o, L), L, default_eta(T, body.R, L), mu, body.R, T, body.dim)
    return alg, o, body


def test_main_initial_state():
    alg, _, _ = make_main()
    assert alg.q == 0.5 and alg.tau == 1 and alg.U == alg.W == alg.S == 0.0


def test_small_first_gradient_is_clipped_and_restarts():
    alg, _, _ = make_main()
    alg.feed([0.5, 0.0])  # below L / 1
    assert alg.U == alg.W == alg.S == 0.0
    assert np.array_equal(alg.clipped_sum, [0, 0])
    assert alg.restarts == [1] and alg.tau == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_identical_gradients_restart_only_in_round_one():
    # R mu |t g|^2 <= t |g|^2 ln 3 holds only for t = 1.
    alg, _, _ = make_main(T=3)
    for _ in range(3):
        alg.feed([1.0, 0.0])
    assert alg.restarts == [1]


@given(st.lists(vec2, min_size=1, max_size=40), st.floats(0.1, 5.0))
def test_main_invariants(gs, mu):
    body = LpBall(1.5)
    alg, o, _ = make_main(T=40, mu=mu, body=body)
    U = W = S = 0.0
    for t, g in enumerate(gs, start=1):
        g = g / max(1.0, float(np.linalg.norm(g)))
        x = alg.next()
        u, w = alg.plays()
        assert body.membership(x, 1e-9)
        assert 0.0 < alg.q < 1.0
        gt = g if np.linalg.norm(g) >= 1.0 / t else np.zeros(2)
        restarts_before = len(alg.restarts)
        U += float(gt @ u)
        W += float(gt @ w)
        S += float(gt @ x)
        alg.feed(g)
        if len(alg.restarts) > restarts_before:
            W = S
        assert alg.U == pytest.approx(U, abs=1e-12)
        assert alg.W == pytest.approx(W, abs=1e-12)
        assert alg.S == pytest.approx(S, abs=1e-12)
    assert o.loo_calls <= 2 * len(gs) + 2


def test_main_parameter_checks():
    with pytest.raises(ParameterError):
        MainAlgorithm(lambda: None, 0.0, 0.1, 1.0, 1.0, 10, 2)
    with pytest.warns(RuntimeWarning):
        make_main_eta(5.0)


def make_main_eta(eta):
    o = CountingOracle(EuclideanBall(1.0))
    return MainAlgorithm(lambda: ftsl_new(o, 1.0), 1.0, eta, 1.0, 1.0, 10, 2)


def test_default_eta():
    assert default_eta(100, 1.0, 1.0) == pytest.approx(math.sqrt(math.log(100)) / 10)
    assert default_eta(1, 2.0, 1.0) == pytest.approx(0.25)


# sleeping experts


def test_sleeping_experts_examples():
    h = SleepingExperts(3, 0.1)
    assert np.allclose(h.weights([True, True, True]), 1 / 3)
    p = h.weights([True, False, True])
    sur = h.update([True, False, True], [1.0, 0.7, 0.0], p)
    assert sur[1] == pytest.approx(float(p @ [1.0, 0.7, 0.0]))


def test_sleeping_experts_softmax_by_hand():
    h = SleepingExperts(2, 0.1)
    h.step([True, True], [1.0, 0.0])
    e = math.exp(-0.1)
    assert np.allclose(h.weights([True, True]), [e / (1 + e), 1 / (1 + e)])
    assert h.weights([True, True])[0] == pytest.approx(0.47502, abs=1e-5)


@given(st.integers(2, 8), st.integers(0, 2**31))
def test_sleeping_experts_simplex(N, seed):
    rng = np.random.default_rng(seed)
    h = SleepingExperts(N, 0.5)
    for _ in range(20):
        awake = rng.random(N) < 0.6
        awake[rng.integers(N)] = True
        p = h.step(awake, rng.random(N))
        assert abs(h.pi.sum() - 1) <= 1e-12
        assert np.all(p[~awake] == 0)


def test_sleeping_experts_rejects_empty_awake_set():
    with pytest.raises(ParameterError):
        SleepingExperts(2, 0.1).weights([False, False])


# OGD


def test_ogd_examples():
    ogd = OGD(CountingOracle(EuclideanBall(1.0)), 0.5)
    ogd.feed([1, 0])
    assert np.allclose(ogd.next(), [-0.5, 0])
    sq = OGD(CountingOracle(cube(1.0)), 1.0, x0=[1, 0])
    sq.feed([-2, 0])
    assert np.allclose(sq.next(), [1, 0], atol=1e-8)
