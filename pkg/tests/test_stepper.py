import warnings

import numpy as np
import pytest

from eulercut.assembly import error_norms
from eulercut.mesh import build_structured
from eulercut.problems import Problem, circle_static, kite
from eulercut.stepper import BOOTSTRAP, INTERPOLATE, StepError, Stepper, StepperOptions, run_problem


def _mesh(n):
    return build_structured(-1, -1, 1, 1, n, n)


@pytest.fixture(autouse=True)
def _quiet_runtime():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def _constant_problem():
    base = circle_static()
    return Problem("CONST", base.levelset, lambda x, y, t: np.ones_like(np.asarray(x, float)),
                   lambda x, y, t: np.zeros(np.shape(x) + (2,)), None, None, None, 1.0)


def test_bdf1_keeps_one_field():
    st = Stepper(kite(), _mesh(8), 0.25, 4, StepperOptions(r=1))
    state = st.run()
    assert len(state.history) == 1 and state.n == 4


def test_bdf2_keeps_two_fields():
    st = Stepper(kite(), _mesh(8), 0.25, 4, StepperOptions(r=2))
    assert len(st.run().history) == 2


@pytest.mark.parametrize("r", [1, 2, 3])
def test_constant_solution_is_stationary(r):
    res = run_problem(_constant_problem(), _mesh(8), 0.1, 6, StepperOptions(r=r))
    state = res["state"]
    act = state.geometry.active.active_dofs
    assert np.allclose(state.history[0].coeffs[act], 1.0, atol=1e-10)
    assert res["linf_l2"] < 1e-10


def test_kite_smoke_run_logs_every_step():
    res = run_problem(kite(), _mesh(16), 0.125, 8, StepperOptions())
    rows = res["state"].log_rows
    assert [row["n"] for row in rows] == list(range(1, 9))
    assert all(row["K"] >= 1 for row in rows)
    assert res["l2_h1"] < 0.5 and res["linf_l2"] < 0.05


def test_bootstrap_close_to_interpolate():
    errs = {}
    for policy in (INTERPOLATE, BOOTSTRAP):
        res = run_problem(kite(), _mesh(16), 0.125, 8, StepperOptions(startup=policy))
        errs[policy] = res["state"].log_rows[-1]["l2_error"]
    assert errs[BOOTSTRAP] <= 2 * errs[INTERPOLATE]
    assert errs[INTERPOLATE] <= 2 * errs[BOOTSTRAP]


def test_bootstrap_bdf3_needs_three_steps():
    with pytest.raises(ValueError, match="too few steps"):
        Stepper(kite(), _mesh(8), 0.5, 2, StepperOptions(r=3, startup=BOOTSTRAP))


def test_unknown_startup():
    with pytest.raises(ValueError, match="unknown startup"):
        Stepper(kite(), _mesh(8), 0.5, 2, StepperOptions(startup="GUESS"))


def test_small_timestep_guard():
    with pytest.raises(ValueError, match="time step too small"):
        Stepper(kite(), _mesh(2), 1e-3, 1, StepperOptions())
    with pytest.warns(RuntimeWarning, match="time step too small"):
        Stepper(kite(), _mesh(2), 1e-3, 1, StepperOptions(refuse_small_dt=False))


def test_extension_too_small():
    st = Stepper(kite(), _mesh(16), 0.05, 20, StepperOptions(plus_layers=False, r=1))
    with pytest.raises(StepError, match="extension too small"):
        st._check_inclusion(st.geometry(0.0, 0), st.geometry(1.0, 20))


def test_delta_below_transport_distance():
    with pytest.raises(ValueError, match="violates delta"):
        Stepper(kite(), _mesh(16), 0.5, 2, StepperOptions(delta_safety=0.5))


def test_no_steps_left():
    st = Stepper(kite(), _mesh(8), 0.5, 2)
    state = st.run()
    with pytest.raises(StepError, match="no steps left"):
        st.advance(state)


def test_initial_interpolation_rate():
    errs = []
    for n in (8, 16, 32):
        st = Stepper(kite(), _mesh(n), 0.5, 2, StepperOptions(k=2, q=2))
        geo = st.geometry(0.0, 0)
        u = st._initial(geo)
        l2, _ = error_norms(u, st.problem.exact, st.problem.exact_grad, geo.theta, geo.slice,
                            geo.active, 0.0, 6)
        errs.append(l2)
    rates = -np.diff(np.log2(errs))
    assert rates[-1] > 2.5


def test_energy_is_monotone_without_source():
    opt = StepperOptions(track_energy=True)
    st = Stepper(kite(with_source=False), _mesh(8), 1 / 40, 40, opt)
    E = np.array(st.run().energy)
    assert len(E) == 39
    assert np.all(E[1:] <= E[:-1] * (1 + 10 / 40))
