import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dtc.liouvillian import DriveProtocol
from dtc.meanfield_dimer import MfParams, spin_rhs
from dtc.meanfield_ring import (
    RingParams,
    RingProtocol,
    RingScan,
    RingSpectrum,
    bond_tunneling,
    drive_protocol_eval,
    fourier_grid,
    generalized_imbalance,
    localized_state,
    ring_fourier,
    ring_rhs,
    run_ring,
    site_offsets,
    with_axis,
)
from dtc.numerics import expm

TD = RingProtocol(J=1.0, Jf=5.0, xi=np.pi / 8, T=4 * np.pi)
TD_PARAMS = RingParams(UN=-5.5, gammaN=0.2, alpha=0.1)


def random_state(rng, M):
    z = rng.normal(size=M) + 1j * rng.normal(size=M)
    return z / np.linalg.norm(z)


# ---- drive ----------------------------------------------------------------

def test_drive_laws():
    T, xi = TD.T, TD.xi
    assert drive_protocol_eval(TD, 0.0) == (1.0, 1.0)
    assert drive_protocol_eval(TD, T / 2 - xi / 2) == (5.0, 1.0)
    assert drive_protocol_eval(TD, T - xi / 2) == (1.0, 5.0)
    assert drive_protocol_eval(TD, T / 2) == (1.0, 1.0)
    assert drive_protocol_eval(TD, 3 * T - xi / 2) == (1.0, 5.0)


def test_segments_cover_period_and_match_laws():
    segs = TD.segments()
    assert segs[0][0] == 0 and segs[-1][1] == TD.T
    for (t0, t1, jo, je), nxt in zip(segs, segs[1:] + [None]):
        if nxt is not None:
            assert t1 == nxt[0]
        assert drive_protocol_eval(TD, 0.5 * (t0 + t1)) == (jo, je)


def test_protocol_validation():
    with pytest.raises(ValueError):
        RingProtocol(1.0, 5.0, 3.0, 4.0)
    with pytest.raises(ValueError):
        RingProtocol(0.0, 5.0, 0.1, 4.0)
    with pytest.raises(ValueError):
        RingParams(-5.5, -0.1)
    with pytest.raises(ValueError):
        bond_tunneling(5, 1.0, 1.0)


def test_bond_and_site_layout():
    assert list(bond_tunneling(6, 5.0, 1.0)) == [5, 1, 5, 1, 5, 1]
    assert list(site_offsets(4, 0.3)) == [0.3, 0, 0.3, 0]


# ---- right-hand side ------------------------------------------------------

@pytest.mark.parametrize("M", [2, 4, 6, 8])
def test_uniform_state_only_acquires_phase(M):
    z = np.full(M, 1 / np.sqrt(M), dtype=complex)
    p = RingParams(-4.0, 0.3)
    dz = ring_rhs(z, np.linspace(0.5, 3, M), p)
    assert np.max(np.abs(2 * (z.conj() * dz).real)) < 1e-15
    # with equal bonds the derivative is proportional to z: a global phase rotation
    dz = ring_rhs(z, np.full(M, 1.7), p)
    assert np.allclose(dz, dz[0] / z[0] * z, atol=1e-14)


def test_decoupled_sites_rotate():
    rng = np.random.default_rng(0)
    z = random_state(rng, 6)
    dz = ring_rhs(z, np.zeros(6), RingParams(-3.0, 0.0))
    assert np.allclose(dz, 3.0j * np.abs(z) ** 2 * z, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 6, 8]))
def test_norm_is_conserved_by_the_flow(seed, M):
    rng = np.random.default_rng(seed)
    z = random_state(rng, M)
    p = RingParams(rng.uniform(-7, 2), rng.uniform(0, 1), rng.uniform(-1, 1))
    dz = ring_rhs(z, rng.uniform(0.1, 6, M), p)
    assert abs(2 * np.sum((z.conj() * dz).real)) < 1e-13


def _spin_of(z):
    c = z[0].conj() * z[1]
    return np.array([c.real, c.imag, (abs(z[0]) ** 2 - abs(z[1]) ** 2) / 2])


def _spin_velocity(z, dz):
    dc = dz[0].conj() * z[1] + z[0].conj() * dz[1]
    dn = 2 * (z.conj() * dz).real
    return np.array([dc.real, dc.imag, (dn[0] - dn[1]) / 2])


def test_two_site_chain_reduces_to_dimer():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        z = random_state(rng, 2)
        J = rng.uniform(0.2, 5)
        UN, gN, a = rng.uniform(-6, 1), rng.uniform(0, 0.6), rng.uniform(-0.5, 0.5)
        dz = ring_rhs(z, [J, 0.0], RingParams(UN, gN, a), open_chain=True)
        ref = spin_rhs(_spin_of(z), J, MfParams(UN, gN, a, DriveProtocol.constant(J, 1.0)))
        worst = max(worst, np.max(np.abs(_spin_velocity(z, dz) - ref)))
    assert worst < 1e-10


def test_batched_rhs_matches_columns():
    rng = np.random.default_rng(2)
    Z = np.column_stack([random_state(rng, 6) for _ in range(3)])
    Jb = bond_tunneling(6, 5.0, 1.0)
    out = ring_rhs(Z, Jb, TD_PARAMS)
    for k in range(3):
        assert np.allclose(out[:, k], ring_rhs(Z[:, k], Jb, TD_PARAMS), atol=0)


# ---- imbalance ------------------------------------------------------------

def test_generalized_imbalance_examples():
    assert generalized_imbalance(localized_state(6, 1)) == pytest.approx(1)
    assert generalized_imbalance(localized_state(6, 3)) == pytest.approx(np.exp(2j * np.pi / 3))
    assert generalized_imbalance(localized_state(6, 2)) == 0
    z = np.zeros(6, dtype=complex)
    z[[0, 2, 4]] = 1 / np.sqrt(3)
    assert abs(generalized_imbalance(z)) < 1e-15


def test_generalized_imbalance_batch():
    Z = np.column_stack([localized_state(4, 1), localized_state(4, 3)])
    assert np.allclose(generalized_imbalance(Z), [1, -1])


# ---- Fourier --------------------------------------------------------------

def test_fourier_grid():
    nu = fourier_grid(512)
    assert 1 / 3 in nu and 5 / 7 in nu and 0.0 in nu
    assert np.all(np.diff(nu) > 0) and nu[-1] < 1
    assert np.any(np.isclose(nu, 171 / 512))


def test_rotation_peaks_at_one_third():
    k = np.arange(700)
    spec = ring_fourier(np.exp(2j * np.pi * k / 3), W=512, transient=100)
    assert spec.dominant == pytest.approx(1 / 3)
    assert spec.at(1 / 3) == pytest.approx(1.0, abs=1e-12)
    assert spec.dominance(1 / 3) > 1e6
    assert spec.raw_dominance(1 / 3) < 5


def test_constant_signal_sits_in_zero_bin():
    spec = ring_fourier(np.full(612, 0.4 + 0.1j))
    assert spec.dominant == 0.0
    assert spec.at(0.0) == pytest.approx(abs(0.4 + 0.1j))
    # on the m/W bins; the extra rational bins are not orthogonal to a constant
    on_grid = np.isclose((spec.nu * 512) % 1, 0) & (spec.nu > 0)
    assert np.max(spec.magnitude[on_grid]) < 1e-12


def test_dominance_without_line_is_small():
    rng = np.random.default_rng(3)
    spec = ring_fourier(rng.normal(size=612) + 1j * rng.normal(size=612))
    assert spec.dominance(1 / 3) < 2


def test_fourier_needs_enough_samples():
    with pytest.raises(ValueError):
        ring_fourier(np.ones(100), W=512, transient=100)


# ---- trajectories ---------------------------------------------------------

def test_linear_limit_is_lattice_rotation():
    M = 6
    proto = RingProtocol(1.0, 1.0, 0.3, 2.0)
    p = RingParams(0.0, 0.0)
    z0 = random_state(np.random.default_rng(4), M)
    tr = run_ring(p, proto, z0, 10, rtol=1e-12, atol=1e-14)
    h = -np.roll(np.eye(M), 1, axis=1) - np.roll(np.eye(M), -1, axis=1)
    z_ref = expm(-1j * h, 10 * proto.T) @ z0
    assert np.allclose(tr.z_final, z_ref, atol=1e-9)
    assert np.max(np.abs(tr.density.sum(axis=1) - 1)) < 1e-10


def test_norm_drift_per_period():
    tr = run_ring(TD_PARAMS, TD, localized_state(6, 1), 40)
    drift = np.abs(np.diff(tr.density.sum(axis=1)))
    assert np.max(drift) < 1e-8


def test_translation_by_two_sites():
    z0 = random_state(np.random.default_rng(5), 6)
    a = run_ring(TD_PARAMS, TD, z0, 25, rtol=1e-11, atol=1e-13)
    b = run_ring(TD_PARAMS, TD, np.roll(z0, 2), 25, rtol=1e-11, atol=1e-13)
    assert np.max(np.abs(b.O - np.exp(2j * np.pi / 3) * a.O)) < 1e-9


def test_global_phase_invariance():
    z0 = random_state(np.random.default_rng(6), 6)
    a = run_ring(TD_PARAMS, TD, z0, 15)
    b = run_ring(TD_PARAMS, TD, np.exp(0.7j) * z0, 15)
    assert np.max(np.abs(a.density - b.density)) < 1e-9


def test_batch_equals_single_runs():
    Z = np.column_stack([localized_state(6, 1), localized_state(6, 2)])
    batch = run_ring(TD_PARAMS, TD, Z, 5)
    for k, site in enumerate((1, 2)):
        single = run_ring(TD_PARAMS, TD, localized_state(6, site), 5)
        assert np.max(np.abs(batch[k].O - single.O)) < 1e-7


def test_first_period_moves_one_to_three():
    tr = run_ring(TD_PARAMS, TD, localized_state(6, 1), 3)
    assert np.argmax(tr.density[1]) == 2
    assert np.argmax(tr.density[2]) == 4
    assert np.argmax(tr.density[3]) == 0


def test_trajectory_csv(tmp_path):
    tr = run_ring(TD_PARAMS, TD, localized_state(4, 1), 2)
    path = tmp_path / "ring.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "period,site,density"
    assert len(lines) == 1 + 3 * 4


@pytest.mark.slow
def test_even_site_load_reverses_circulation():
    W = 256
    fwd, rev = run_ring(TD_PARAMS, TD, np.column_stack([localized_state(6, 1), localized_state(6, 2)]), 100 + W)
    s_fwd, s_rev = ring_fourier(fwd, W), ring_fourier(rev, W)
    assert s_fwd.dominant == pytest.approx(1 / 3)
    # omega_s and omega - omega_s are conjugate frequencies on the grid
    assert s_rev.dominant == pytest.approx(2 / 3)


# ---- scans ----------------------------------------------------------------

def test_with_axis():
    p, pr = with_axis(TD_PARAMS, TD, "Jf", 4.0)
    assert pr.Jf == 4.0 and p == TD_PARAMS
    assert with_axis(TD_PARAMS, TD, "gammaN", 0.1)[0].gammaN == 0.1
    assert with_axis(TD_PARAMS, TD, "UN", -5)[0].UN == -5
    assert with_axis(TD_PARAMS, TD, "alpha", 0.0)[0].alpha == 0.0
    with pytest.raises(ValueError):
        with_axis(TD_PARAMS, TD, "T", 1.0)


def _synthetic_scan(amplitudes, W=64):
    k = np.arange(W)
    rng = np.random.default_rng(7)
    spectra = []
    for a in amplitudes:
        s = a * np.exp(2j * np.pi * k / 3) + 0.1 * (rng.normal(size=W) + 1j * rng.normal(size=W))
        spectra.append(ring_fourier(s, W=W, transient=0))
    return RingScan("gammaN", np.arange(len(amplitudes), dtype=float), spectra, [])


def test_scan_window_intervals():
    scan = _synthetic_scan([0, 5, 5, 0, 5, 0])
    assert scan.window(1 / 3) == [(1.0, 2.0), (4.0, 4.0)]
    assert _synthetic_scan([5, 5]).window(1 / 3) == [(0.0, 1.0)]


def test_scan_csv(tmp_path):
    scan = _synthetic_scan([1, 0])
    path = tmp_path / "s.csv"
    scan.to_csv(path, header=["h"])
    lines = path.read_text().splitlines()
    assert lines[1] == "axis_value,omega_over_driving_frequency,magnitude"
    assert len(lines) == 2 + 2 * scan.spectra[0].nu.size
