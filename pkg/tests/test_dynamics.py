import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from procctl.basis import basis_change, build_gell_mann_basis, build_logical_basis, lift_operator
from procctl.dynamics import (
    LindbladModel,
    ProcessMatrix,
    ProcessPropagator,
    apply_process,
    build_generator,
    density_liouvillian,
    initial_process,
    propagate,
    propagate_choi,
    random_density_matrix,
    to_choi,
    trace_distance,
    validate_against_state_equation,
)
from procctl.errors import DimensionError, InvalidGridError, NumericError
from procctl.fields import TimeGrid
from procctl.objectives import costate_boundary, gate_target, inner

from conftest import random_hermitian, random_model, random_unitary


def _fields(rng, m, n, amp=0.4):
    return amp * rng.normal(size=(m, n))


def test_initial_process_is_identity(gm4):
    chi = initial_process(gm4).matrix
    ref = np.zeros((16, 16))
    ref[15, 15] = 4
    assert np.abs(chi - ref).max() < 1e-14
    assert np.abs(chi - gate_target(np.eye(4), gm4)).max() < 1e-14


def test_apply_process_identity_and_kraus(gm4, rng):
    rho = random_density_matrix(4, rng)
    assert np.abs(apply_process(initial_process(gm4), rho) - rho).max() < 1e-14
    u = random_unitary(rng, 4)
    out = apply_process(gate_target(u, gm4), rho, gm4)
    assert np.abs(out - u @ rho @ u.conj().T).max() < 1e-13


def test_generator_trace_functional_in_left_null_space(rng):
    b = build_gell_mann_basis(3)
    model = random_model(rng, 3)
    k = build_generator(model, [0.3, -0.2], b).flow
    # d/dt Tr chi = vec(I)^T (-i K) vec(chi) in row-major vectorization
    assert np.abs(np.eye(9).ravel() @ k).max() < 1e-12


def test_generator_hamiltonian_part(rng):
    b = build_gell_mann_basis(2)
    h = random_hermitian(rng, 2)
    model = LindbladModel(2, h)
    lh = lift_operator(h, b)
    k = build_generator(model, (), b).matrix
    assert np.abs(k - (np.kron(lh, np.eye(4)) - np.kron(np.eye(4), lh.T))).max() < 1e-13
    assert np.abs(k - k.conj().T).max() < 1e-13


def test_unitary_propagation_matches_expm(gm2, rng):
    h = random_hermitian(rng, 2)
    grid = TimeGrid(3.0, 6)
    traj = propagate(LindbladModel(2, h), np.zeros((0, 6)), grid, basis=gm2)
    u = scipy.linalg.expm(-1j * h * 3.0)
    assert np.abs(traj.final - gate_target(u, gm2)).max() < 1e-12


def test_zero_model_keeps_initial(gm4):
    model = LindbladModel(4, np.zeros((4, 4)), (np.diag([1.0, 0, 0, -1]),), ((np.eye(4)[[1]].T @ np.eye(4)[[2]], 0.0),))
    traj = propagate(model, np.zeros((1, 20)), TimeGrid(50.0, 20), basis=gm4)
    assert np.abs(traj.states - initial_process(gm4).matrix).max() == 0


@pytest.mark.parametrize("dim", [2, 3])
def test_oracle_agreement_random_models(dim, rng):
    model = random_model(rng, dim)
    grid = TimeGrid(8.0, 40)
    rep = validate_against_state_equation(model, _fields(rng, 2, 40), grid, samples=5, tolerance=1e-10)
    assert rep.passed, rep.max_trace_distance
    assert rep.n_points == 41


@given(st.integers(0, 2**32 - 1))
def test_process_invariants_along_trajectory(seed):
    rng = np.random.default_rng(seed)
    b = build_gell_mann_basis(3)
    model = random_model(rng, 3)
    traj = propagate(model, _fields(rng, 2, 15), TimeGrid(6.0, 15), basis=b)
    for k in range(len(traj)):
        chi = traj.process(k)
        assert abs(chi.trace - 3) < 1e-8
        assert chi.min_eigenvalue() > -1e-8
        assert chi.hermiticity_error() < 1e-9


def test_divisibility(rng):
    # propagating [0, T] equals propagating [0, T/2] then [T/2, T] from the intermediate process
    b = build_gell_mann_basis(2)
    model = random_model(rng, 2, n_controls=1)
    f = _fields(rng, 1, 20)
    whole = propagate(model, f, TimeGrid(4.0, 20), basis=b)
    first = propagate(model, f[:, :10], TimeGrid(2.0, 10), basis=b)
    second = propagate(model, f[:, 10:], TimeGrid(2.0, 10), initial=ProcessMatrix(b, first.final), basis=b)
    assert np.abs(whole.final - second.final).max() < 1e-12


def test_choi_isomorphism(rng):
    b = build_gell_mann_basis(3)
    model = random_model(rng, 3)
    grid = TimeGrid(5.0, 20)
    f = _fields(rng, 2, 20)
    traj = propagate(model, f, grid, basis=b)
    choi_traj = propagate_choi(model, f, grid, b)
    logical = build_logical_basis(3)
    change = basis_change(b, logical)
    rho = random_density_matrix(3, rng)
    for k in (0, 7, 20):
        rho_e = to_choi(ProcessMatrix(b, traj.states[k]), change)
        assert abs(np.trace(rho_e) - 1) < 1e-12
        assert np.linalg.eigvalsh(rho_e)[0] > -1e-10
        assert np.abs(choi_traj.states[k] - rho_e).max() < 1e-12
        out_gm = apply_process(traj.states[k], rho, b)
        out_l = apply_process(3 * rho_e, rho, logical)
        assert np.abs(out_gm - out_l).max() < 1e-12


def test_frame_split_matches_direct(rng):
    # a commuting frame term integrated exactly equals the same term inside the drift
    b = build_gell_mann_basis(4)
    w = 7.3
    frame = np.diag([0.0, -w, 0.0, 0.0])
    drift = np.diag([0.0, 0.0, 0.2, 0.05]).astype(complex)
    hp = np.zeros((4, 4))
    hp[0, 2] = hp[2, 0] = 0.5
    hs = np.zeros((4, 4))
    hs[2, 3] = hs[3, 2] = -0.5
    l1 = np.zeros((4, 4))
    l1[1, 2] = 1
    jumps = ((l1, 0.03),)
    split = LindbladModel(4, drift, (hp, hs), jumps, frame=frame)
    direct = LindbladModel(4, drift + frame, (hp, hs), jumps)
    grid = TimeGrid(6.0, 30)
    f = _fields(rng, 2, 30)
    a = propagate(split, f, grid, basis=b).final
    c = propagate(direct, f, grid, basis=b).final
    assert np.abs(a - c).max() < 1e-11


def test_frame_must_commute():
    with pytest.raises(ValueError):
        LindbladModel(2, np.zeros((2, 2)), (np.array([[0, 1], [1, 0]]),), frame=np.diag([0.0, 1.0]))
    with pytest.raises(ValueError):
        LindbladModel(2, np.zeros((2, 2)), jumps=((np.array([[1, 1], [0, 0]]), 0.1),), frame=np.diag([0.0, 1.0]))


def test_adjoint_duality(rng):
    b = build_gell_mann_basis(3)
    model = random_model(rng, 3)
    grid = TimeGrid(6.0, 30)
    f = _fields(rng, 2, 30)
    fwd = propagate(model, f, grid, basis=b)
    target = gate_target(random_unitary(rng, 3), b)
    lam = propagate(model, f, grid, "backward-adjoint", initial=costate_boundary(fwd.final, target), basis=b)
    pairs = np.array([inner(lam.states[k], fwd.states[k]) for k in range(31)])
    assert np.abs(pairs - pairs[-1]).max() < 1e-12


def test_propagate_errors(gm2):
    model = LindbladModel(2, np.zeros((2, 2)), (np.diag([1.0, -1.0]),))
    grid = TimeGrid(1.0, 4)
    with pytest.raises(DimensionError):
        propagate(model, np.zeros((1, 5)), grid, basis=gm2)
    with pytest.raises(NumericError):
        propagate(model, np.array([[0, np.nan, 0, 0]]), grid, basis=gm2)
    with pytest.raises(DimensionError):
        propagate(model, np.zeros((1, 4)), grid, basis=build_gell_mann_basis(3))
    with pytest.raises(DimensionError):
        LindbladModel(2, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        LindbladModel(2, np.array([[0, 1], [0, 0]]))
    with pytest.raises(InvalidGridError):
        TimeGrid(1.0, 1)


def test_process_matrix_violations(gm2):
    good = initial_process(gm2)
    assert good.is_valid()
    bad = ProcessMatrix(gm2, np.diag([-1.0, 0, 0, 4]).astype(complex))
    msgs = bad.violations()
    assert any("PSD" in m for m in msgs) and any("trace" in m for m in msgs)
    with pytest.raises(DimensionError):
        ProcessMatrix(gm2, np.eye(3))


def test_trace_distance_oracle_helpers(rng):
    rho = random_density_matrix(3, rng)
    assert abs(np.trace(rho) - 1) < 1e-14 and np.linalg.eigvalsh(rho)[0] > 0
    a = np.diag([1.0, 0, 0])
    c = np.diag([0, 1.0, 0])
    assert abs(trace_distance(a, c) - 1) < 1e-15
    model = LindbladModel(2, np.diag([0.0, 1.0]))
    lv = density_liouvillian(model)
    assert np.abs(np.ones(4)[[0, 3]] @ np.eye(4)[[0, 3]] @ lv).max() < 1e-15


def test_trajectory_diagnostics_csv(tmp_path, gm2):
    model = LindbladModel(2, np.diag([0.0, 1.0]))
    traj = propagate(model, np.zeros((0, 4)), TimeGrid(1.0, 4), basis=gm2)
    path = tmp_path / "traj.csv"
    traj.write_csv(path, initial_process(gm2).matrix)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_ns,trace,min_eig,herm_err,fidelity"
    assert len(lines) == 6
    assert float(lines[1].split(",")[4]) == 1.0
