import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dtc.fock import DimerBasis, DimerParams, build_bec_state, build_flip, build_hamiltonian, build_imbalance, build_jump
from dtc.liouvillian import (
    DriveProtocol,
    StateError,
    build_liouvillian,
    evolve_state,
    flip_superoperator,
    ideal_flip_propagator,
    master_equation_rhs,
    propagate_piecewise,
    unvec,
    vec,
)
from dtc.numerics import eig, expm, integrate_ode

FIG1 = dict(J1=4.0, J2=1.0, xi=np.pi / 8, T=2.5 * np.pi)


def random_density(rng, D, rank=None):
    r = D if rank is None else rank
    A = rng.normal(size=(D, r)) + 1j * rng.normal(size=(D, r))
    rho = A @ A.conj().T
    return rho / np.trace(rho)


def trace_distance(a, b):
    return 0.5 * np.sum(np.abs(np.linalg.eigvalsh((a - b + (a - b).conj().T) / 2)))


def random_params(rng, N):
    return DimerParams.from_scaled(N, UN=rng.uniform(-6, 1), gammaN=rng.uniform(0, 0.5),
                                   alpha=rng.uniform(-0.5, 0.5))


# ---- generator ------------------------------------------------------------

def test_liouvillian_free_single_particle():
    p = DimerParams(1.0, 0.0, 0.0, 0.0, 1)
    b = p.basis
    rho = np.outer(b.ket(1, 0), b.ket(1, 0))
    out = build_liouvillian(p).apply(rho)
    # H rho = -|0,1><1,0| and rho H = -|1,0><0,1|
    expected = 1j * (np.outer(b.ket(0, 1), b.ket(1, 0)) - np.outer(b.ket(1, 0), b.ket(0, 1)))
    assert np.allclose(out, expected, atol=1e-15)


@pytest.mark.parametrize("N", [1, 3, 6])
def test_liouvillian_matches_direct_action(N):
    rng = np.random.default_rng(N)
    p = random_params(rng, N)
    L = build_liouvillian(p, 2.3)
    H = build_hamiltonian(p, 2.3).matrix
    c = build_jump(p.basis).matrix
    for _ in range(20):
        rho = random_density(rng, N + 1)
        direct = master_equation_rhs(H, c, p.gamma, rho)
        assert np.max(np.abs(L.apply(rho) - direct)) < 1e-12
        # Hermiticity preservation
        assert np.max(np.abs(L.apply(rho.conj().T) - L.apply(rho).conj().T)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_liouvillian_trace_preserving(seed, N):
    p = random_params(np.random.default_rng(seed), N)
    L = build_liouvillian(p).matrix
    left_null = vec(np.eye(N + 1)).conj() @ L
    assert np.linalg.norm(left_null) < 1e-10 * np.linalg.norm(L)


@pytest.mark.parametrize("N", range(1, 9))
def test_bec_is_stationary_without_interaction(N):
    p = DimerParams(1.0, 0.0, 0.0, 0.3 / N, N)
    psi = build_bec_state(p.basis)
    assert np.max(np.abs(build_liouvillian(p).apply(np.outer(psi, psi.conj())))) < 1e-12


# ---- protocol -------------------------------------------------------------

def test_protocol_validation():
    with pytest.raises(ValueError):
        DriveProtocol(())
    with pytest.raises(ValueError):
        DriveProtocol(((0.0, 1.0),))
    with pytest.raises(ValueError):
        DriveProtocol.two_step(4, 1, 3.0, 2.0)
    pr = DriveProtocol.two_step(4, 1, 0.5, 2.0)
    assert pr.period == 2.0 and pr.omega == pytest.approx(np.pi)
    assert pr.J_at(0.2) == 4 and pr.J_at(0.7) == 1 and pr.J_at(2.2) == 4


# ---- one-period maps ------------------------------------------------------

def test_single_segment_is_one_exponential():
    p = DimerParams.from_scaled(3, -2, 0.2)
    V = propagate_piecewise(p, DriveProtocol.constant(1.0, 1.7)).matrix
    assert np.allclose(V, expm(build_liouvillian(p).matrix, 1.7), atol=1e-13)


def test_equal_segments_compose():
    p = DimerParams.from_scaled(4, -3, 0.1, alpha=0.2)
    V = propagate_piecewise(p, DriveProtocol(((0.4, 1.0), (1.3, 1.0)))).matrix
    assert np.linalg.norm(V - expm(build_liouvillian(p).matrix, 1.7)) < 1e-10


def _ode_period(p, protocol, rho0):
    D = p.N + 1
    c = build_jump(p.basis).matrix
    rho = rho0.reshape(-1)
    t = 0.0
    for d, j in protocol.segments:
        H = build_hamiltonian(p, j).matrix
        rho = integrate_ode(lambda _t, y: master_equation_rhs(H, c, p.gamma, y.reshape(D, D)).reshape(-1),
                            rho, t, t + d, 1e-12, 1e-14)
        t += d
    return rho.reshape(D, D)


def test_fig1_map_matches_ode_oracle():
    p = DimerParams.from_scaled(6, UN=-4.0, gammaN=0.1)
    proto = DriveProtocol.two_step(**FIG1)
    V = propagate_piecewise(p, proto)
    rho0 = random_density(np.random.default_rng(0), 7)
    assert trace_distance(V.apply(rho0), _ode_period(p, proto, rho0)) < 1e-8


def test_two_periods_is_square():
    p = DimerParams.from_scaled(5, -3.5, 0.1, alpha=0.1)
    proto = DriveProtocol.two_step(**FIG1)
    V = propagate_piecewise(p, proto)
    V2 = propagate_piecewise(p, DriveProtocol(proto.segments * 2))
    assert np.linalg.norm(V2.matrix - V.power(2).matrix) < 1e-10 * np.linalg.norm(V2.matrix)


@pytest.mark.parametrize("N", [2, 5, 8])
def test_flip_commutes_with_map_at_zero_offset(N):
    p = DimerParams.from_scaled(N, -4.0, 0.1)
    V = propagate_piecewise(p, DriveProtocol.two_step(**FIG1)).matrix
    X = flip_superoperator(N).matrix
    assert np.linalg.norm(X @ V - V @ X) < 1e-9


def test_flip_does_not_commute_with_offset():
    p = DimerParams.from_scaled(4, -4.0, 0.1, alpha=0.3)
    V = propagate_piecewise(p, DriveProtocol.two_step(**FIG1)).matrix
    X = flip_superoperator(4).matrix
    assert np.linalg.norm(X @ V - V @ X) > 1e-3


def test_ideal_flip_odd_mode_eigenvalue():
    N, xi, T = 10, np.pi / 8, 2.5 * np.pi
    p = DimerParams.from_scaled(N, -4.0, 0.1)
    L = build_liouvillian(p).matrix
    res = eig(L)
    order = np.argsort(-res.values.real)
    X = flip_superoperator(N).matrix
    Vf = ideal_flip_propagator(p, xi, T).matrix
    # second mode of the undriven generator is odd under the flip
    l2, m2 = res.values[order[1]], res.vectors[:, order[1]]
    assert np.linalg.norm(X @ m2 + m2) < 1e-8
    assert np.linalg.norm(Vf @ m2 + np.exp(l2 * (T - xi)) * m2) < 1e-8


def test_flip_alone_negates_imbalance():
    N = 6
    b = DimerBasis(N)
    X = flip_superoperator(N)
    O = build_imbalance(b).matrix
    rho = random_density(np.random.default_rng(3), N + 1)
    assert np.trace(O @ X.apply(rho)) == pytest.approx(-np.trace(O @ rho), abs=1e-12)


def test_fast_flip_approaches_ideal_flip():
    N, J1 = 10, 50.0
    xi, T = np.pi / (2 * J1), 2.5 * np.pi
    p = DimerParams.from_scaled(N, -4.0, 0.1)
    V = propagate_piecewise(p, DriveProtocol.two_step(J1, 1.0, xi, T))
    Vf = ideal_flip_propagator(p, xi, T)
    rng = np.random.default_rng(9)
    for _ in range(5):
        rho = random_density(rng, N + 1)
        assert trace_distance(V.apply(rho), Vf.apply(rho)) < 0.05


def test_ideal_flip_validates():
    with pytest.raises(ValueError):
        ideal_flip_propagator(DimerParams(1.0, 0, 0, 0, 2), 2.0, 1.0)


# ---- evolution ------------------------------------------------------------

def test_dark_state_convergence():
    N = 4
    p = DimerParams(1.0, 0.0, 0.0, 0.2, N)
    b = p.basis
    rho0 = np.outer(b.ket(0, N), b.ket(0, N))
    psi = build_bec_state(b)
    traj = evolve_state(rho0, p, DriveProtocol.constant(1.0, 2.0), 200,
                        {"O": build_imbalance(b)}, keep_states=True)
    assert abs(traj.values["O"][-1]) < 1e-6
    fid = [np.vdot(psi, r @ psi).real for r in traj.states]
    assert fid[-1] > 1 - 1e-6 and fid[-1] > fid[0]


def test_identity_drive_leaves_state_unchanged():
    N = 3
    p = DimerParams(1e-300, 0.0, 0.0, 0.0, N)
    rho0 = random_density(np.random.default_rng(1), N + 1)
    traj = evolve_state(rho0, p, DriveProtocol.constant(1e-300, 1.0), 5, {}, keep_states=True)
    assert all(np.array_equal(r, rho0) for r in traj.states)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_evolution_stays_physical(seed, N):
    rng = np.random.default_rng(seed)
    p = random_params(rng, N)
    proto = DriveProtocol.two_step(rng.uniform(1, 6), 1.0, rng.uniform(0.1, 0.5), rng.uniform(2, 8))
    rho0 = random_density(rng, N + 1, rank=1)
    traj = evolve_state(rho0, p, proto, 30, {}, keep_states=True, check=False)
    for r in traj.states:
        assert abs(np.trace(r) - 1) < 1e-9
        assert np.max(np.abs(r - r.conj().T)) < 1e-10
        assert np.linalg.eigvalsh((r + r.conj().T) / 2)[0] >= -1e-8


def test_evolve_rejects_unphysical_input():
    p = DimerParams(1.0, 0.0, 0.0, 0.1, 2)
    with pytest.raises(StateError):
        evolve_state(np.diag([1.0, 1.0, 0.0]), p, DriveProtocol.constant(1.0, 1.0), 2, {})
    with pytest.raises(ValueError):
        evolve_state(np.eye(2) / 2, p, DriveProtocol.constant(1.0, 1.0), 2, {})


def test_intra_period_samples_match_direct_exponentials():
    N = 3
    p = DimerParams.from_scaled(N, -2.0, 0.2)
    proto = DriveProtocol.two_step(4.0, 1.0, 0.4, 2.0)
    b = p.basis
    rho0 = np.outer(b.ket(0, N), b.ket(0, N))
    traj = evolve_state(rho0, p, proto, 2, {"O": build_imbalance(b)}, samples_per_segment=3, keep_states=True)
    assert np.all(np.diff(traj.times) > 0)
    assert len(traj.times) == 3 + 2 * 6
    # sample at t = 0.3 lies in the first segment
    i = int(np.argmin(np.abs(traj.times - 0.3)))
    direct = unvec(expm(build_liouvillian(p, 4.0).matrix, 0.3) @ vec(rho0), N + 1)
    assert np.allclose(traj.states[i], direct, atol=1e-12)
    # stroboscopic entries agree with repeated map application
    V = propagate_piecewise(p, proto)
    k2 = int(np.argmin(np.abs(traj.times - 4.0)))
    assert np.allclose(traj.states[k2], V.apply(V.apply(rho0)), atol=1e-12)


def test_trajectory_csv(tmp_path):
    N = 2
    p = DimerParams(1.0, 0.0, 0.0, 0.1, N)
    b = p.basis
    traj = evolve_state(np.outer(b.ket(2, 0), b.ket(2, 0)), p, DriveProtocol.constant(1.0, 1.0), 3,
                        {"O": build_imbalance(b)})
    path = tmp_path / "t.csv"
    traj.to_csv(path, header=["note"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# note"
    assert lines[1] == "period_index,time,observable_name,value_re,value_im"
    assert len(lines) == 2 + 4
