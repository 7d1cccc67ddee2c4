import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gdrcsvm.conic_ir import (
    BACKENDS, ConicProgram, MatExpr, kkt_residuals, smat, solve, svec, tri_index, tri_size, validate,
)
from gdrcsvm.conic_ir.solve import certified, cone_violation
from gdrcsvm.errors import ConfigError, ShapeError
from gdrcsvm.models import build_svm

SOLVERS = [b for b in BACKENDS if b != "auto"]
sym_entries = st.floats(-10, 10, allow_nan=False)


def lower_bound_program(kind="ineq"):
    """min x subject to x >= 3, written with a linear row or a 1x1 PSD block."""
    prog = ConicProgram("bound")
    x = prog.variable("x")
    if kind == "ineq":
        prog.add_ineq(x - 3.0)
    else:
        prog.add_psd_block(MatExpr(1, x - 3.0))
    prog.minimize(x)
    return prog


def trace_program(lower):
    d = len(lower)
    prog = ConicProgram("trace")
    X = prog.symmetric("X", d)
    prog.add_psd_block(X.matrix() - MatExpr.constant(lower), "X >= L")
    prog.minimize(X.trace())
    return prog


# --- svec convention ----------------------------------------------------------------

def test_svec_layout():
    M = np.array([[1.0, 2.0, 4.0], [2.0, 3.0, 5.0], [4.0, 5.0, 6.0]])
    r2 = math.sqrt(2)
    np.testing.assert_allclose(svec(M), [1, 2 * r2, 3, 4 * r2, 5 * r2, 6])
    assert [tri_index(i, j) for j in range(3) for i in range(j + 1)] == list(range(6))
    assert tri_size(3) == 6


@given(st.integers(1, 6).flatmap(lambda d: arrays(float, (d, d), elements=sym_entries)))
def test_svec_round_trip_and_isometry(B):
    A = B + B.T
    assert np.allclose(smat(svec(A)), A)
    C = B @ B.T
    assert svec(A) @ svec(C) == pytest.approx(np.sum(A * C), rel=1e-12, abs=1e-9)


def test_smat_length_check():
    with pytest.raises(ShapeError):
        smat(np.ones(4))


# --- program construction -----------------------------------------------------------

def test_undeclared_block_rejected():
    prog = ConicProgram()
    other = ConicProgram()
    y = other.variable("y")
    with pytest.raises(ShapeError):
        prog.add_ineq(y)


def test_psd_block_from_lmi_has_bordered_size():
    from gdrcsvm.ambiguity import AmbiguityConfig, build_core_sets
    from gdrcsvm.data_io import Dataset
    from gdrcsvm.models import build_gdrc, class_profiles

    rng = np.random.default_rng(0)
    X = np.vstack([1 + rng.standard_normal((10, 2)), -1 + rng.standard_normal((10, 2))])
    train = Dataset(X, np.r_[np.ones(10), -np.ones(10)])
    prof = class_profiles(train, 0.1, 1.2)
    prog = build_gdrc(prof, build_core_sets(prof, train, AmbiguityConfig(lam=0.2)), 16.0, 0.05)
    margin = [c for c in prog.constraints if c.kind == "psd" and "margin LMI" in c.label]
    assert len(margin) == 2
    assert all(c.matrix.d == 3 for c in margin)


def test_program_dump_is_deterministic_json():
    a = trace_program(np.eye(2)).to_json()
    b = trace_program(np.eye(2)).to_json()
    assert a == b
    doc = json.loads(a)
    assert doc["blocks"] == [{"name": "X", "kind": "symmetric", "size": 3, "dim": 2}]
    assert doc["constraints"][0]["kind"] == "psd" and doc["constraints"][0]["dim"] == 2


def test_compiled_cone_order():
    prog = ConicProgram()
    x = prog.variable("x", 2)
    X = prog.symmetric("X", 2)
    prog.add_psd_block(X)
    prog.add_soc(x[0], x[1:])
    prog.add_ineq(x)
    prog.add_eq(x[0] - 1.0)
    cp = prog.compile()
    assert (cp.zero, cp.nonneg, cp.soc, cp.psd) == (1, 2, [2], [2])
    assert cp.n_rows == 1 + 2 + 2 + 3


# --- norm caps ---------------------------------------------------------------------

@given(arrays(float, 3, elements=st.floats(-5, 5, allow_nan=False)), st.floats(0, 10),
       st.sampled_from([1.0, 2.0, math.inf]))
def test_norm_cap_expansion_is_exact(x, s, q):
    prog = ConicProgram()
    xv = prog.variable("x", 3)
    sv = prog.variable("s")
    prog.add_norm_cap(xv, sv, q)
    cp = prog.compile()
    point = np.zeros(cp.n_vars)
    point[cp.layout["x"][0]:cp.layout["x"][0] + 3] = x
    point[cp.layout["s"][0]] = s
    if "_aux0" in cp.layout:
        o, k = cp.layout["_aux0"]
        point[o:o + k] = np.abs(x)  # the smallest feasible auxiliaries
    slack = cp.b - cp.A @ point
    inside = cone_violation(cp, slack) <= 1e-12
    norm = np.linalg.norm(x, ord=q)
    if abs(norm - s) > 1e-9:
        assert inside == (norm <= s)


def test_norm_cap_rejects_other_orders():
    prog = ConicProgram()
    with pytest.raises(ValueError):
        prog.add_norm_cap(prog.variable("x", 2), prog.variable("s"), 3)


# --- solve ---------------------------------------------------------------------------

@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("kind", ["ineq", "psd"])
def test_scalar_lower_bound(backend, kind):
    sol = solve(lower_bound_program(kind), backend=backend)
    assert sol.status == "Optimal"
    assert sol.value("x")[0] == pytest.approx(3.0, abs=1e-6)


@pytest.mark.parametrize("backend", BACKENDS)
def test_trace_over_identity(backend):
    sol = solve(trace_program(np.eye(2)), backend=backend)
    assert sol.status == "Optimal"
    assert sol.objective == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("backend", BACKENDS)
def test_two_point_svm_objective(backend, two_points):
    sol = solve(build_svm(two_points, 1e4), backend=backend)
    assert sol.status == "Optimal"
    assert sol.objective == pytest.approx(0.25, abs=1e-6)


@pytest.mark.parametrize("backend", SOLVERS)
def test_indefinite_constant_block_is_infeasible(backend):
    prog = ConicProgram()
    x = prog.variable("x")
    prog.add_ineq(x)
    prog.add_psd_block(np.array([[1.0, 0.0], [0.0, -1.0]]))
    prog.minimize(x)
    assert solve(prog, backend=backend).status == "Infeasible"


@pytest.mark.parametrize("backend", SOLVERS)
def test_unbounded_detected(backend):
    prog = ConicProgram()
    x = prog.variable("x")
    prog.add_ineq(3.0 - x)
    prog.minimize(x)
    assert solve(prog, backend=backend).status == "Unbounded"


@given(st.integers(1, 4).flatmap(lambda d: arrays(float, (d, d), elements=sym_entries)))
def test_minimum_eigenvalue_sdp(B):
    """min <C, X> over unit-trace PSD X is the smallest eigenvalue of C."""
    C = B + B.T
    d = len(C)
    prog = ConicProgram("eig")
    X = prog.symmetric("X", d)
    prog.add_psd_block(X)
    prog.add_eq(X.trace() - 1.0)
    prog.minimize(X.inner(C))
    tol = 1e-7
    sol = solve(prog, tol=tol)
    assert sol.status == "Optimal"
    assert sol.objective == pytest.approx(np.linalg.eigvalsh(C)[0], abs=1e-5 * (1 + np.abs(C).max()))
    assert max(sol.residuals.values()) <= tol
    assert validate(prog, sol, tol=10 * tol).ok


@pytest.mark.parametrize("backend", BACKENDS)
def test_optimal_means_certified(backend, two_points):
    prog = build_svm(two_points, 1.0)
    tol = 1e-7
    sol = solve(prog, tol=tol, backend=backend)
    assert sol.status == "Optimal"
    assert max(sol.residuals.values()) <= tol
    cp = prog.compile()
    assert certified(cp, np.concatenate([sol.values[k] for k in cp.layout]), sol.dual["s"], sol.dual["z"], tol)


def test_kkt_residuals_at_exact_solution():
    prog = lower_bound_program()
    cp = prog.compile()
    # x = 3, slack 0, multiplier 1
    res = kkt_residuals(cp, np.array([3.0]), np.array([0.0]), np.array([1.0]))
    assert res == {"primal_feas": 0.0, "dual_feas": 0.0, "gap": 0.0}


@pytest.mark.parametrize("kw, key", [({"tol": 0.0}, "tol"), ({"backend": "mosek"}, "backend")])
def test_solve_argument_checks(kw, key):
    with pytest.raises(ConfigError) as info:
        solve(lower_bound_program(), **kw)
    assert info.value.key == key


# --- validate ----------------------------------------------------------------------

def test_validate_exact_point():
    rep = validate(lower_bound_program(), {"x": np.array([3.0])})
    assert rep.ok and rep.min_margin >= -1e-12


def test_validate_reports_violation():
    rep = validate(lower_bound_program(), {"x": np.array([2.9])})
    assert not rep.ok
    assert rep.min_margin == pytest.approx(-0.1)
    assert rep.failures()[0].kind == "ineq"


def test_validate_ignores_solver_residuals():
    prog = lower_bound_program()
    sol = solve(prog)
    forged = type(sol)(status="Optimal", values={"x": np.array([2.0])}, objective=2.0,
                       residuals={"primal_feas": 0.0, "dual_feas": 0.0, "gap": 0.0}, backend="none")
    assert not validate(prog, forged).ok


def test_validate_needs_every_block():
    with pytest.raises(KeyError):
        validate(trace_program(np.eye(2)), {})


def test_validate_psd_eigenvalue():
    rep = validate(trace_program(np.eye(2)), {"X": svec(np.diag([1.0, 0.5]))})
    assert rep.min_psd_eigenvalue == pytest.approx(-0.5)
