"""Heterodyne synthesis, unraveling, and reconstruction checks."""

import math

import numpy as np
import pytest

from phononpair.errors import AliasingError, FloorFitError, ParameterError
from phononpair.heterodyne import (
    G2Reconstruction,
    HeterodyneRecord,
    _floor_estimate,
    _kernel,
    _periodogram,
    filter_sidebands,
    reconstruct_g2,
    synthesize_surrogate,
    unravel_qsd,
    unravel_qsd_single,
)
from phononpair.params import derive, desk_pair, desk_system


@pytest.fixture(scope="module")
def desk3():
    return derive(desk_system(0.3))


@pytest.fixture(scope="module")
def surrogate_rec(desk3):
    # thermal power per record wanders by a few percent over 2500/gamma_eff;
    # two records keep the band-power checks off that noise
    return synthesize_surrogate(desk3, 2500.0, seed=7, n_records=2, dt=2e-3)


@pytest.fixture(scope="module")
def qsd_rec(desk3):
    # n_max = 5: the default cutoff of 3 clips the (n+1) correlator by up
    # to 10 percent at this occupancy, well above the run's resolution
    return unravel_qsd_single(desk3, 200.0, seed=11, n_records=8, dt=2e-3, n_max=5)


def test_parseval_identity():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4096) + 1j * rng.standard_normal(4096)
    w, p = _periodogram(x, 0.01)
    assert p.sum() / (len(x) * 0.01) == pytest.approx(np.mean(np.abs(x) ** 2), rel=1e-12)
    assert w.min() < -200 and w.max() > 200


def test_floor_recovery(desk3):
    rec = synthesize_surrogate(desk3, 400.0, seed=3, dt=2e-3, noise_floor=2.5)
    floor = _floor_estimate(rec.records["single"][0], rec.dt, rec.omega_m, 8.0)
    assert abs(floor - 2.5) / 2.5 < 0.02


def test_filtered_white_noise_variance():
    rng = np.random.default_rng(5)
    dt, n = 2e-3, 500000
    x = (rng.standard_normal((1, n)) + 1j * rng.standard_normal((1, n))) * math.sqrt(
        1.0 / (2.0 * dt)
    )
    rec = HeterodyneRecord({"single": x}, dt, n * dt, 50.0, 5, {"gamma_eff": 1.0})
    streams = filter_sidebands(rec, 8.0)
    k = _kernel("gaussian", 8.0, dt)
    want_discrete = (k**2).sum() / dt
    assert want_discrete == pytest.approx(8.0 / (2.0 * math.sqrt(math.pi)), rel=1e-2)
    trim = streams.trim
    var = np.mean(np.abs(streams.blue["single"][0, trim:-trim]) ** 2)
    assert abs(var - want_discrete) / want_discrete < 0.1


def test_surrogate_classical_calibration(surrogate_rec, desk3):
    streams = filter_sidebands(surrogate_rec)
    g_br = reconstruct_g2(streams, ("single", "red"), ("single", "blue"))
    want = 1.0 + np.exp(-g_br.tau_grid)
    pulls = (g_br.values - want) / g_br.std_errors
    assert np.all(np.abs(pulls) < 3.0)
    assert np.mean(pulls**2) < 2.0
    # same-color thermal bunching through the Gamma path
    g_rr = reconstruct_g2(streams, ("single", "red"), ("single", "red"))
    pulls_rr = (g_rr.values - want) / g_rr.std_errors
    assert np.all(np.abs(pulls_rr) < 3.0)
    # spectral normalization lands on the true singles rates
    assert abs(g_br.w_trigger - desk3.f_r) / desk3.f_r < 0.2
    assert abs(g_br.w_target - desk3.f_b) / desk3.f_b < 0.2
    assert abs(g_br.floor["single"] - 1.0) < 0.05


def test_qsd_single_excess(qsd_rec, desk3):
    streams = filter_sidebands(qsd_rec)
    dt = qsd_rec.dt
    trim = streams.trim
    b = streams.blue["single"][:, trim:-trim]
    r = streams.red["single"][:, trim:-trim]
    n_samp = b.shape[1]
    taus = np.array([0.5, 1.0, 1.5])
    lam_hat, lam_sem = [], []
    for tau in taus:
        m = int(round(tau / dt))
        prod = b[:, m:] * r[:, : n_samp - m]
        blocks = np.array(
            [chunk.mean() for row in prod for chunk in np.array_split(row, 4)]
        )
        lam_hat.append(abs(blocks.mean()))
        lam_sem.append(np.std(blocks, ddof=1) / math.sqrt(len(blocks)))
    lam_hat, lam_sem = np.array(lam_hat), np.array(lam_sem)
    # the cross-color weight carries the occupancy-enhanced (n+1) factor
    n = desk3.n_m
    scale = math.sqrt(desk3.f_b * desk3.f_r * (n + 1.0) / n)
    want_lam = scale * np.exp(-0.5 * taus)
    assert np.all(np.abs(lam_hat - want_lam) / lam_sem < 3.0)
    g = reconstruct_g2(streams, ("single", "red"), ("single", "blue"), taus)
    # a stochastic-amplitude record with the same band powers caps the cross
    # weight at sqrt(W_b W_r) e^{-tau/2}; beating that cap is the point
    ceiling = math.sqrt(g.w_target * g.w_trigger) * math.exp(-0.5 * taus[0])
    assert (lam_hat[0] - ceiling) / lam_sem[0] > 4.0
    want_g = 1.0 + (n + 1.0) / n * np.exp(-taus)
    pulls = (g.values - want_g) / g.std_errors
    assert np.all(np.abs(pulls) < 3.0)


def test_qsd_occupancy(qsd_rec):
    occ = qsd_rec.samples["occupancy"]
    assert abs(occ.mean() - 0.3) < 0.05


def test_qsd_pair_smoke():
    p = desk_pair(0.1, delta=5.0, phi=np.pi / 4)
    rec = unravel_qsd(p, 60.0, seed=13, n_records=2, dt=2e-3)
    assert set(rec.records) == {"A", "B"}
    for r in rec.records.values():
        assert r.shape == (2, 30000)
        assert np.all(np.isfinite(r.real)) and np.all(np.isfinite(r.imag))
    assert not np.allclose(rec.records["A"], rec.records["B"])
    assert 0.1 < rec.samples["occupancy"].mean() < 0.35


def test_gain_phase_invariance(surrogate_rec):
    base = reconstruct_g2(
        filter_sidebands(surrogate_rec), ("single", "red"), ("single", "blue")
    )
    scaled_rec = surrogate_rec.scaled(2.7 * np.exp(0.6j))
    scaled = reconstruct_g2(
        filter_sidebands(scaled_rec), ("single", "red"), ("single", "blue")
    )
    assert np.max(np.abs(scaled.values - base.values)) < 1e-12


def test_tone_passes_with_unit_gain():
    dt, n = 2e-3, 60000
    t = (np.arange(n) + 0.5) * dt
    amp = 1.37 - 0.22j
    rec = HeterodyneRecord(
        {"single": (amp * np.exp(-1j * 50.0 * t))[None, :]},
        dt,
        n * dt,
        50.0,
        None,
        {"gamma_eff": 1.0},
    )
    for kernel in ("gaussian", "raised_cosine"):
        streams = filter_sidebands(rec, 8.0, kernel=kernel)
        mid = streams.blue["single"][0, streams.trim : -streams.trim]
        assert np.max(np.abs(mid - amp)) < 1e-9


def test_guards(surrogate_rec, desk3):
    rec = synthesize_surrogate(desk3, 30.0, seed=1, dt=5e-2)
    with pytest.raises(AliasingError, match="alias"):
        filter_sidebands(rec, 8.0)
    rec2 = synthesize_surrogate(desk3, 30.0, seed=1, dt=2e-3)
    with pytest.raises(AliasingError, match="not resolved"):
        filter_sidebands(rec2, 300.0)
    with pytest.raises(ParameterError, match="kernel"):
        filter_sidebands(rec2, 8.0, kernel="boxcar")
    streams = filter_sidebands(surrogate_rec)
    with pytest.raises(ParameterError, match="0.5/gamma_eff"):
        reconstruct_g2(streams, ("single", "red"), ("single", "blue"), [0.1])
    with pytest.raises(ParameterError, match="detector"):
        reconstruct_g2(streams, ("A", "red"), ("single", "blue"))
    short = filter_sidebands(synthesize_surrogate(desk3, 40.0, seed=2, dt=2e-3))
    with pytest.raises(ParameterError, match="segments"):
        reconstruct_g2(short, ("single", "red"), ("single", "blue"), [3.0], n_segments=40)


def test_binary_roundtrip(tmp_path, qsd_rec):
    path = tmp_path / "het.bin"
    qsd_rec.save_binary(path)
    back = HeterodyneRecord.load_binary(path)
    assert set(back.records) == set(qsd_rec.records)
    for det in back.records:
        assert np.array_equal(back.records[det], qsd_rec.records[det])
    assert back.dt == qsd_rec.dt
    assert back.omega_m == qsd_rec.omega_m
    assert back.params["n_m"] == qsd_rec.params["n_m"]
    assert back.samples is None
    with open(tmp_path / "junk.bin", "wb") as f:
        f.write(b"NOTMAGIC" + b"\x00" * 64)
    with pytest.raises(ParameterError, match="heterodyne"):
        HeterodyneRecord.load_binary(tmp_path / "junk.bin")
