import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nagcert.errors import InvalidParameterError, MomentumSingularityError
from nagcert.optimizers import (
    OptimizerState,
    Trace,
    default_record_every,
    fista_step,
    gd_step,
    iterates,
    momentum,
    nesterov_phase_step,
    nesterov_step,
    phase_residual,
    run,
)
from nagcert.problems import CompositeProblem, as_composite, make_lasso_deblur, make_quadratic, soft_threshold, spike_signal

HALF_SQUARE = make_quadratic((0.5,))
TWO_MODE = make_quadratic((2e-2, 5e-4))


def l1_scalar(lam=1.0):
    return CompositeProblem(HALF_SQUARE, g=lambda x: lam * float(np.abs(x).sum()),
                            prox=lambda z, s: soft_threshold(z, lam * s), l1_weight=lam)


# -- single steps -----------------------------------------------------------

def test_gd_step_examples():
    assert gd_step(HALF_SQUARE, np.array([1.0]), 0.1)[0] == pytest.approx(0.9, abs=1e-16)
    np.testing.assert_array_equal(gd_step(HALF_SQUARE, np.array([0.0]), 0.1), [0.0])
    np.testing.assert_allclose(gd_step(TWO_MODE, np.ones(2), 1.0), [0.96, 0.999], rtol=1e-15)


def test_first_nesterov_step_is_gradient_step():
    st0 = OptimizerState.initial([1.0, 1.0], 1.0)
    st1 = nesterov_step(TWO_MODE, st0)
    np.testing.assert_array_equal(st1.x, gd_step(TWO_MODE, np.ones(2), 1.0))
    np.testing.assert_array_equal(st1.y, st1.x)
    assert st1.k == 1


def test_nesterov_hand_recurrence():
    st0 = OptimizerState.initial([1.0], 0.1, r=2.0)
    st1 = nesterov_step(HALF_SQUARE, st0)
    st2 = nesterov_step(HALF_SQUARE, st1)
    assert st1.x[0] == pytest.approx(0.9, abs=1e-15)
    assert st1.y[0] == pytest.approx(0.9, abs=1e-15)
    assert st2.x[0] == pytest.approx(0.81, abs=1e-15)
    assert st2.y[0] == pytest.approx(0.7875, abs=1e-15)


def test_noninteger_negative_r_never_hits_zero():
    st_ = OptimizerState.initial([1.0], 0.1, r=-1.5)
    for _ in range(5):
        st_ = nesterov_step(HALF_SQUARE, st_)
    assert np.isfinite(st_.x).all()


def test_momentum_singularity():
    with pytest.raises(MomentumSingularityError) as exc:
        momentum(2, -2.0)
    assert exc.value.k == 2
    st_ = OptimizerState.initial([1.0], 0.1, r=-1.0)
    with pytest.raises(MomentumSingularityError):
        nesterov_step(HALF_SQUARE, st_)


def test_phase_step_matches_standard_hand_values():
    s = 0.1
    st1 = nesterov_step(HALF_SQUARE, OptimizerState.initial([1.0], s))
    ph2 = nesterov_phase_step(HALF_SQUARE, st1)
    assert ph2.v[0] == pytest.approx(-0.09 / math.sqrt(s), rel=1e-14)
    assert ph2.x[0] == pytest.approx(0.81, rel=1e-14)
    std2 = nesterov_step(HALF_SQUARE, st1)
    np.testing.assert_allclose(ph2.y, std2.y, rtol=1e-14)


def test_phase_step_stationary():
    p = make_quadratic((1.0, 1.0), shift=(2.0, 3.0))
    st_ = OptimizerState(k=4, x=np.array([2.0, 3.0]), x_prev=np.array([2.0, 3.0]),
                         y=np.array([2.0, 3.0]), s=0.1, r=2.0)
    nxt = nesterov_phase_step(p, st_)
    assert nxt.k == 5
    np.testing.assert_array_equal(nxt.x, st_.x)
    np.testing.assert_array_equal(nxt.v, [0.0, 0.0])


def test_phase_step_needs_velocity():
    with pytest.raises(InvalidParameterError):
        nesterov_phase_step(HALF_SQUARE, OptimizerState.initial([1.0], 0.1))


def test_fista_hand_values():
    st1 = fista_step(l1_scalar(), OptimizerState.initial([2.0], 0.5))
    assert st1.x[0] == 0.5 and st1.y[0] == 0.5


def test_fista_fixed_point_at_minimizer():
    p = make_lasso_deblur((1 / 3, 1 / 3, 1 / 3), spike_signal(64), 3, 0.1, 0.5)
    s = 0.9 / p.L
    xs = p.minimizer
    for st_ in iterates("fista", p, s, 2.0, xs, 50):
        np.testing.assert_allclose(st_.x, xs, atol=1e-12)


# -- runner -----------------------------------------------------------------

def test_run_sanity_two_mode():
    tr = run("nesterov", TWO_MODE, 1.0, 2.0, np.ones(2), max_iter=10)
    assert len(tr) == 11
    assert np.all(tr.f_err > 0) and np.all(np.isfinite(tr.f_err))
    np.testing.assert_array_equal(tr.k, np.arange(11))


@pytest.mark.parametrize("max_iter,every,expected", [(10, 1, 11), (10, 3, 5), (9, 3, 4), (1, 5, 2)])
def test_trace_length(max_iter, every, expected):
    tr = run("gd", TWO_MODE, 1.0, x0=np.ones(2), max_iter=max_iter, record_every=every)
    assert len(tr) == expected == -(-max_iter // every) + 1
    assert tr.k[0] == 0 and tr.k[-1] == max_iter
    assert np.all(np.diff(tr.k) > 0)


def test_default_record_every():
    assert default_record_every(10**5) == 1
    assert default_record_every(10**5 + 1) == 10


def test_run_rejects_bad_arguments():
    with pytest.raises(InvalidParameterError):
        run("heavy-ball", TWO_MODE, 1.0)
    with pytest.raises(InvalidParameterError):
        run("nesterov", TWO_MODE, 1.0, max_iter=0)
    with pytest.raises(InvalidParameterError):
        run("nesterov", TWO_MODE, 25.0)
    with pytest.raises(InvalidParameterError):
        run("fista", TWO_MODE, 1.0)
    with pytest.raises(MomentumSingularityError):
        run("nesterov", TWO_MODE, 1.0, r=-2.0, x0=np.ones(2))


def test_shifted_start_for_integer_negative_r():
    tr = run("nesterov", TWO_MODE, 1.0, r=-2.0, x0=np.ones(2), max_iter=100, shift_start=True)
    assert tr.k[0] == 3
    assert np.all(np.isfinite(tr.f_err))


def test_trace_records_and_gradient_column():
    tr = run("nesterov", TWO_MODE, 1.0, 2.0, np.ones(2), max_iter=5)
    rec = tr[0]
    assert rec.k == 0 and rec.prox_grad_sq is None and rec.lyapunov is None
    assert rec.grad_sq == pytest.approx(0.04**2 + 0.001**2)
    assert [r.k for r in tr] == list(range(6))
    assert tr.gradient_column() is tr.grad_sq
    assert tr.index_of(3) == 3
    with pytest.raises(KeyError):
        tr.index_of(99)
    assert len(Trace.empty("gd")) == 0


def test_run_is_deterministic():
    a = run("nesterov", TWO_MODE, 1.0, 5.0, np.ones(2), 500)
    b = run("nesterov", TWO_MODE, 1.0, 5.0, np.ones(2), 500)
    np.testing.assert_array_equal(a.f_err, b.f_err)


def test_nesterov_vs_phase_traces_two_mode():
    a = run("nesterov", TWO_MODE, 1.0, 2.0, np.ones(2), 10**4)
    b = run("nesterov-phase", TWO_MODE, 1.0, 2.0, np.ones(2), 10**4)
    assert np.max(np.abs(a.f_err - b.f_err) / a.f_err) <= 1e-8


def test_fista_zero_g_matches_nesterov_trace():
    a = run("nesterov", TWO_MODE, 1.0, 2.0, np.ones(2), 10**4)
    b = run("fista", as_composite(TWO_MODE), 1.0, 2.0, np.ones(2), 10**4)
    np.testing.assert_allclose(b.f_err, a.f_err, rtol=1e-10)
    np.testing.assert_allclose(b.prox_grad_sq, a.grad_sq, rtol=1e-10)


def test_descent_after_run():
    for r in (2.0, 5.0, -1.5):
        tr = run("nesterov", TWO_MODE, 1.0, r, np.ones(2), 20000)
        assert tr.f_err[-1] < tr.f_err[0]


def test_negative_r_transient_growth():
    tr = run("nesterov", TWO_MODE, 1.0, -1.5, np.ones(2), 20000)
    assert tr.f_err.max() > tr.f_err[0]


# -- properties -------------------------------------------------------------

def _pairs(problem, s, r, x0, n):
    std = list(iterates("nesterov", problem, s, r, x0, n))
    ph = list(iterates("nesterov-phase", problem, s, r, x0, n))
    return std, ph


@pytest.mark.parametrize("r", [2.0, 5.0, -1.5])
@pytest.mark.parametrize("problem,x0", [
    (TWO_MODE, np.ones(2)),
    (make_quadratic((0.1, 0.4, 1.0), shift=(1.0, -1.0, 2.0)), np.zeros(3)),
])
def test_form_equivalence(problem, x0, r):
    s = 0.9 / problem.L
    std, ph = _pairs(problem, s, r, x0, 1000)
    for a, b in zip(std, ph):
        assert np.linalg.norm(a.x - b.x) <= 1e-8 * (1 + np.linalg.norm(a.x))


@pytest.mark.parametrize("r", [2.0, 5.0, -1.5])
def test_reformulated_identity_every_step(r):
    p = make_quadratic((0.1, 0.4, 1.0), shift=(1.0, -1.0, 2.0))
    s = 0.5
    states = list(iterates("nesterov-phase", p, s, r, np.zeros(3), 300))
    for before, after in zip(states[1:], states[2:]):
        assert phase_residual(p, before, after) <= 1e-10


def test_fista_reduction_iterates():
    p = make_quadratic((0.05, 0.3, 0.5), shift=(0.5, 0.0, -1.0))
    c = as_composite(p)
    s = 0.9 / p.L
    for a, b in zip(iterates("nesterov", p, s, 2.0, np.ones(3), 10**4),
                    iterates("fista", c, s, 2.0, np.ones(3), 10**4)):
        assert np.linalg.norm(a.x - b.x) <= 1e-10 * (1 + np.linalg.norm(a.x))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=4),
       st.floats(0.05, 0.95),
       st.sampled_from([2.0, 3.0, 5.0, -1.5, 0.5]))
def test_form_equivalence_property(diag, frac, r):
    p = make_quadratic(diag)
    s = frac / p.L
    x0 = np.linspace(1.0, -1.0, len(diag))
    std, ph = _pairs(p, s, r, x0, 200)
    for a, b in zip(std, ph):
        assert np.linalg.norm(a.x - b.x) <= 1e-8 * (1 + np.linalg.norm(a.x))
        np.testing.assert_allclose(a.velocity, b.velocity, rtol=1e-6, atol=1e-8)
