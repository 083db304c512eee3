"""Trajectory simulator: channel algebra, statistics, conditioning, records."""

import dataclasses
import math

import numpy as np
import pytest

from phononpair import jumps, master_equation as me
from phononpair.correlations import A_BLUE, A_RED, B_BLUE, B_RED, SINGLE_BLUE, SINGLE_RED
from phononpair.errors import (
    InsufficientClicksError,
    ParameterError,
    RateInconsistencyError,
    TruncationError,
)
from phononpair.params import derive, desk_pair, desk_system


def pair_channels(n_m=0.1, delta=0.0, phi=0.0, n_max=5, **kwargs):
    p = desk_pair(n_m, delta=delta, phi=phi)
    return jumps.build_channels(p, derive(p.cavity1), n_max=n_max, **kwargs)


def zero_rate_channels(delta):
    p = desk_pair(0.1, delta=delta)
    d = dataclasses.replace(
        derive(p.cavity1), a_minus=0.0, a_plus=0.0, gamma=0.0, n_th=0.0
    )
    return jumps.build_channels(p, d, n_max=3)


def test_channel_inventory():
    ch = pair_channels()  # pure optical, eta_esc = 1: observed channels only
    assert sorted(c.label for c in ch.channels) == ["A_blue", "A_red", "B_blue", "B_red"]
    ch = pair_channels(eta_esc=0.7)
    labels = {c.label for c in ch.channels}
    assert {"escape_blue_1", "escape_red_2"} <= labels
    assert sum(c.observed for c in ch.channels) == 4
    bath = desk_system(0.1, bath_fraction=0.4)
    single = jumps.build_single_channels(derive(bath))
    assert {"thermal_down", "thermal_up", "blue", "red"} <= {
        c.label for c in single.channels
    }


@pytest.mark.parametrize("phi", [0.0, 0.7, -1.2])
def test_blue_combination_collapses_to_second_mode(phi):
    # L_{A,blue} + (-i) L_{B,blue} must be proportional to c2 for any phi
    ch = pair_channels(phi=phi)
    ops = {c.label: c.operator for c in ch.channels}
    combo = ops["A_blue"] - 1j * ops["B_blue"]
    _, c2 = jumps._pair_lowering(ch.n_max)
    coef = combo[0, 1]  # <0,0|combo|0,1> element
    assert abs(coef) > 0
    assert np.allclose(combo, coef * c2, atol=1e-14)


def test_summed_dissipator_diagonal_and_balanced():
    # thermal + escape + observed channels together must sum to the diagonal
    # down (N1+N2) + up (N1+N2+2) dissipator regardless of the split
    p = desk_pair(0.1, delta=2.0, bath_fraction=0.3)
    d = derive(p.cavity1)
    ch = jumps.build_channels(p, d, n_max=4, eta_esc=0.6)
    n1, n2 = np.indices(ch.shape).reshape(2, -1)
    down = d.gamma * (d.n_th + 1.0) + d.a_minus
    up = d.gamma * d.n_th + d.a_plus
    # truncated raising kills the up-rate on the n = n_max edge
    up_diag = np.where(n1 < 4, n1 + 1.0, 0.0) + np.where(n2 < 4, n2 + 1.0, 0.0)
    want = down * (n1 + n2) + up * up_diag
    assert np.allclose(ch.decay, want, rtol=1e-12)
    assert np.allclose(ch.phase, 2.0 * n2, rtol=1e-12)
    assert {"thermal_up_1", "escape_blue_2"} <= {c.label for c in ch.channels}


def test_tampered_rates_rejected():
    p = desk_pair(0.1)
    d = derive(p.cavity1)
    bad = dataclasses.replace(d, a_plus=1.1 * d.a_plus)
    with pytest.raises(RateInconsistencyError, match="n/\\(n\\+1\\)"):
        jumps.build_channels(p, bad)


def test_zero_rates_only_phase_rotation():
    delta = 3.0
    ch = zero_rate_channels(delta)
    t_final = 2.0
    res = jumps.evolve(
        ch, jumps.JointState.pair_superposition(3), duration=t_final, seed=11
    )
    assert res.record.counts() == 0
    p00, p01, p10, p11, q, higher = res.final_state.sector_elements()
    assert p01 == pytest.approx(0.5, abs=1e-12)
    assert p10 == pytest.approx(0.5, abs=1e-12)
    assert q == pytest.approx(0.5 * np.exp(1j * delta * t_final), abs=1e-9)


def test_seed_determinism():
    ch = pair_channels()
    a = jumps.evolve(ch, duration=300.0, seed=42)
    b = jumps.evolve(ch, duration=300.0, seed=42)
    assert np.array_equal(a.record.times, b.record.times)
    assert np.array_equal(a.record.detectors, b.record.detectors)
    assert np.array_equal(a.record.colors, b.record.colors)
    assert np.array_equal(a.final_state.amplitudes, b.final_state.amplitudes)
    c = jumps.evolve(ch, duration=300.0, seed=43)
    assert not np.array_equal(a.record.times, c.record.times)


def test_click_fluxes_match_derived_rates():
    d = derive(desk_system(0.1))
    ch = pair_channels(0.1)
    res = jumps.evolve(ch, duration=6000.0, seed=5, burn_in=15.0)
    t = res.record.duration
    blue = res.record.counts(A_BLUE) + res.record.counts(B_BLUE)
    red = res.record.counts(A_RED) + res.record.counts(B_RED)
    want_blue = 2.0 * d.a_minus * d.n_m * t  # = 2 f_b at eta_esc = 1
    want_red = 2.0 * d.a_plus * (d.n_m + 1.0) * t
    assert abs(blue - want_blue) < 3.0 * math.sqrt(want_blue)
    assert abs(red - want_red) < 3.0 * math.sqrt(want_red)
    # beam splitter sends half of each color to each detector
    assert abs(res.record.counts(A_BLUE) - blue / 2.0) < 3.0 * math.sqrt(blue / 2.0)


def test_ensemble_occupancy_and_split_invariance():
    d = derive(desk_system(0.1))
    grid = np.linspace(0.0, 30.0, 61)
    means = {}
    counts = {}
    for eta in (0.3, 1.0):
        ch = pair_channels(0.1, eta_esc=eta)
        # eps_trunc loosened: rare thermal excursions brush the n_max edge in
        # short records, which is harmless for a 3 sigma occupancy check
        runs = jumps.run_ensemble(
            ch, 120, 30.0, seed=21, burn_in=12.0, sample_times=grid, eps_trunc=0.05
        )
        occ = np.array([r.diagnostics.occupancies[:, 0].mean() for r in runs])
        means[eta] = (occ.mean(), occ.std(ddof=1) / math.sqrt(len(occ)))
        counts[eta] = sum(r.record.counts() for r in runs)
    for eta, (m, s) in means.items():
        assert abs(m - d.n_m) < 3.0 * s, f"eta={eta}: {m} vs {d.n_m}"
    # unconditioned moments agree across the split...
    diff_sigma = math.hypot(means[0.3][1], means[1.0][1])
    assert abs(means[0.3][0] - means[1.0][0]) < 3.0 * diff_sigma
    # ...while observed click totals scale with eta_esc
    ratio = counts[0.3] / counts[1.0]
    assert ratio == pytest.approx(0.3, abs=3.0 * 0.3 / math.sqrt(counts[0.3]))


def test_truncation_metric_and_error():
    ch = pair_channels(0.3)
    res = jumps.evolve(ch, duration=400.0, seed=9, burn_in=10.0)
    diag = res.diagnostics
    assert 0.0 < diag.truncation_mean < 1e-2
    assert diag.truncation_max >= diag.truncation_mean
    with pytest.raises(TruncationError, match="raise n_max"):
        jumps.evolve(ch, duration=400.0, seed=9, burn_in=10.0, eps_trunc=1e-7)


def test_record_round_trip(tmp_path):
    ch = pair_channels(0.1, delta=1.0, phi=0.3)
    rec = jumps.evolve(ch, duration=500.0, seed=3).record
    assert rec.counts() > 30
    text = tmp_path / "clicks.txt"
    rec.save_text(text)
    back = jumps.ClickRecord.load_text(text)
    assert np.array_equal(back.times, rec.times)
    assert np.array_equal(back.detectors, rec.detectors)
    assert np.array_equal(back.colors, rec.colors)
    assert back.duration == rec.duration
    assert back.params == rec.params
    blob = tmp_path / "clicks.bin"
    rec.save_binary(blob)
    back = jumps.ClickRecord.load_binary(blob)
    assert np.array_equal(back.times, rec.times)
    assert np.array_equal(back.detectors, rec.detectors)
    assert np.array_equal(back.colors, rec.colors)
    with pytest.raises(ParameterError, match="binary"):
        jumps.ClickRecord.load_binary(text)


def test_select_and_counts():
    ch = pair_channels(0.1)
    rec = jumps.evolve(ch, duration=800.0, seed=8).record
    picked = rec.select(A_BLUE)
    assert len(picked) == rec.counts(A_BLUE)
    assert np.all(np.diff(picked) > 0)
    total = sum(rec.counts(t) for t in (A_BLUE, A_RED, B_BLUE, B_RED))
    assert total == rec.counts()


def test_conditional_entangles_and_loses_it():
    n_m = 0.05
    p = desk_pair(n_m)
    ch = jumps.build_channels(p, derive(p.cavity1), n_max=4)
    cond = jumps.conditional_after_red(
        ch, 24, 2500.0, seed=17, tau_grid=np.linspace(0.0, 2.2, 12)
    )
    assert cond.n_clicks > 1000
    # a red click annihilates the |00> component exactly
    assert cond.p00[0] < 1e-12
    assert cond.concurrence[0] == pytest.approx((1.0 + n_m) ** -3, abs=0.02)
    # per-trajectory purity gives |q| = sqrt(p01 p10); averaging only shrinks it
    assert np.all(np.abs(cond.q) <= np.sqrt(cond.p01 * cond.p10) + 1e-12)
    assert cond.separability_ratio[0] < 0.05
    # entanglement persists at modest delay, with a sane propagated error
    i = np.searchsorted(cond.tau_since_red, 0.5)
    assert cond.separability_ratio[i] + 3.0 * cond.separability_sigma[i] < 1.0
    assert np.all(np.diff(cond.separability_ratio) > -0.05)


def test_conditional_matches_master_equation_oracle():
    # delta=0: ensemble q(tau) after a red click vs dense-integrator evolution
    # of the exactly conditioned state, both at n_max = 3
    n_m = 0.1
    p = desk_pair(n_m)
    d = derive(p.cavity1)
    ch = jumps.build_channels(p, d, n_max=3)
    tau = np.linspace(0.0, 1.5, 7)
    cond = jumps.conditional_after_red(ch, 30, 1800.0, seed=23, tau_grid=tau)
    assert cond.n_clicks > 800

    ops = {c.label: c.operator for c in ch.channels}
    a_red = ops["A_red"]
    ss = np.kron(me.thermal_state(n_m, 4), me.thermal_state(n_m, 4))
    rho0 = a_red @ ss @ a_red.conj().T
    rho0 /= np.trace(rho0).real
    h, collapse = me.unconditional_system(d, n_max=3, delta=0.0)
    rhos = me.evolve_fixed_step(h, collapse, rho0, tau, dt=5e-3)
    # sector coherence <10|rho|01>, not the full <c2^dag c1> (higher sectors
    # inflate the latter; the concurrence block wants the matrix element)
    q_me = np.array([r[4, 1] for r in rhos])
    scale = math.hypot(cond.sem["q_re"].max(), cond.sem["q_im"].max())
    assert np.all(np.abs(cond.q - q_me) < max(4.0 * scale, 0.02))
    # delta=0: coherence phase frozen, magnitude decays monotonically
    assert np.all(np.abs(np.angle(cond.q / q_me)) < 0.05)
    assert np.all(np.diff(np.abs(cond.q)) < 0.0)


def test_conditional_guards():
    ch = pair_channels(0.1)
    with pytest.raises(InsufficientClicksError, match="extend"):
        jumps.conditional_after_red(ch, 2, 30.0, seed=1, min_clicks=10**6)
    with pytest.raises(ParameterError, match="red"):
        jumps.conditional_after_red(ch, 2, 30.0, seed=1, trigger=A_BLUE)
    single = jumps.build_single_channels(derive(desk_system(0.1)))
    with pytest.raises(ParameterError, match="pair"):
        jumps.conditional_after_red(single, 2, 30.0, seed=1)


def test_single_cavity_fluxes():
    d = derive(desk_system(0.2))
    ch = jumps.build_single_channels(d, n_max=5)
    res = jumps.evolve(ch, duration=5000.0, seed=31, burn_in=15.0)
    blue = res.record.counts(SINGLE_BLUE)
    want = d.a_minus * d.n_m * res.record.duration  # = f_b
    assert abs(blue - want) < 3.0 * math.sqrt(want)
    red = res.record.counts(SINGLE_RED)
    want_red = d.a_plus * (d.n_m + 1.0) * res.record.duration
    assert abs(red - want_red) < 3.0 * math.sqrt(want_red)


def test_evolve_input_validation():
    ch = pair_channels(0.1)
    with pytest.raises(ParameterError, match="duration"):
        jumps.evolve(ch, duration=0.0, seed=1)
    with pytest.raises(ParameterError, match="shape"):
        jumps.evolve(ch, jumps.JointState.vacuum(3), duration=1.0, seed=1)
    with pytest.raises(ParameterError, match="sample_times"):
        jumps.evolve(ch, duration=1.0, seed=1, sample_times=np.array([2.0]))
