"""Estimators over click records: g2, the witness, waiting times, inequalities.

All estimators are pure functions of immutable records.  Normalization uses
measured singles rates rather than theoretical fluxes, so results are
independent of detection gain; pair counting is one-sided (tau > 0) because
every closed form being tested is, and the tau = 0 bin is excluded.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .correlations import A_BLUE, A_RED, B_BLUE, DetectorTag
from .errors import EmptyChannelError, ParameterError
from .jumps import ClickRecord


@dataclass
class CorrelationEstimate:
    """Binned estimate with per-bin uncertainties.

    tau_grid holds bin centers; counts is metadata (raw pair counts, event
    totals, degeneracy flags for derived quantities).
    """

    tau_grid: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    pair: tuple
    bin_width: float
    counts: dict

    def save_csv(self, path) -> None:
        pair_counts = self.counts.get("pair_counts")
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["tau", "value", "std_error", "counts"])
            for i, tau in enumerate(self.tau_grid):
                c = int(pair_counts[i]) if pair_counts is not None else ""
                w.writerow([repr(float(tau)), repr(float(self.values[i])),
                            repr(float(self.std_errors[i])), c])


def _delay_counts(from_times, to_times, tau_max, bin_width, n_bins):
    lo = np.searchsorted(to_times, from_times, side="right")
    hi = np.searchsorted(to_times, from_times + tau_max, side="right")
    delays = [to_times[a:b] - t0 for t0, a, b in zip(from_times, lo, hi)]
    if delays:
        delays = np.concatenate(delays)
    else:
        delays = np.empty(0)
    idx = np.minimum((delays / bin_width).astype(int), n_bins - 1)
    return np.bincount(idx, minlength=n_bins).astype(float)


def estimate_g2(
    rec: ClickRecord,
    from_tag: DetectorTag,
    to_tag: DetectorTag,
    tau_max: float,
    bin_width: float,
) -> CorrelationEstimate:
    """g2(tau_k) = [C_k/(N_from bin)]/(N_to/duration) on bins (0, tau_max].

    From-events within tau_max of the record end are dropped so every
    trigger sees a full window; Poisson errors sqrt(C_k) are propagated
    (empty bins get the one-count scale so the error stays usable).
    """
    if tau_max <= 0 or bin_width <= 0:
        raise ParameterError("tau_max and bin_width must be positive")
    if rec.duration <= 2 * tau_max:
        raise ParameterError("record duration must well exceed tau_max")
    n_bins = int(np.ceil(tau_max / bin_width - 1e-9))
    tau_max = n_bins * bin_width
    from_all = rec.select(from_tag)
    to_times = rec.select(to_tag)
    if len(from_all) == 0:
        raise EmptyChannelError(f"no {from_tag.detector}-{from_tag.color} events")
    if len(to_times) == 0:
        raise EmptyChannelError(f"no {to_tag.detector}-{to_tag.color} events")
    from_times = from_all[from_all <= rec.duration - tau_max]
    if len(from_times) == 0:
        raise EmptyChannelError("no trigger events with a complete window")
    counts = _delay_counts(from_times, to_times, tau_max, bin_width, n_bins)
    scale = rec.duration / (len(from_times) * bin_width * len(to_times))
    values = counts * scale
    std = np.sqrt(np.maximum(counts, 1.0)) * scale
    centers = (np.arange(n_bins) + 0.5) * bin_width
    meta = {
        "pair_counts": counts.astype(int),
        "n_from": int(len(from_times)),
        "n_from_total": int(len(from_all)),
        "n_to": int(len(to_times)),
        "duration": rec.duration,
    }
    return CorrelationEstimate(centers, values, std, (from_tag, to_tag), bin_width, meta)


def witness_from_estimates(g2_aa, g2_ba, sig_aa, sig_ba):
    """R_m and its first-order error from the two conditional g2 arrays."""
    a = np.asarray(g2_aa, dtype=float)
    b = np.asarray(g2_ba, dtype=float)
    diff = a - b
    s = a + b - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        values = 4.0 * s / diff**2
        dda = 4.0 * (diff - 2.0 * s) / diff**3
        ddb = 4.0 * (diff + 2.0 * s) / diff**3
        sigma = np.sqrt((dda * sig_aa) ** 2 + (ddb * sig_ba) ** 2)
    return values, sigma


def estimate_witness(
    rec: ClickRecord,
    tau_max: float,
    bin_width: float,
    *,
    bootstrap: bool = False,
    n_boot: int = 50,
    block: float | None = None,
    seed=None,
) -> CorrelationEstimate:
    """R_m(tau) from g2_{A_blue|A_red} and g2_{B_blue|A_red}, bin-wise.

    Bins where the two g2 values are statistically indistinguishable
    (|difference| < 2 sigma) are flagged degenerate in counts["degenerate"];
    R_m diverges there by construction and carries no information.  With
    bootstrap=True a block bootstrap over record segments (block length
    10/gamma_eff unless given) replaces the first-order errors.

    The bound R <= R_m presumes the A/B tags are the two output ports of the
    beam splitter fed by both oscillators.  Fed any other wiring the number
    still computes but has no entanglement meaning.
    """
    aa = estimate_g2(rec, A_RED, A_BLUE, tau_max, bin_width)
    ba = estimate_g2(rec, A_RED, B_BLUE, tau_max, bin_width)
    values, sigma = witness_from_estimates(
        aa.values, ba.values, aa.std_errors, ba.std_errors
    )
    degenerate = np.abs(aa.values - ba.values) < 2.0 * np.hypot(
        aa.std_errors, ba.std_errors
    )
    if bootstrap:
        sigma = _bootstrap_witness(
            rec, tau_max, bin_width, n_boot, block, seed, len(values)
        )
    meta = {
        "pair_counts": aa.counts["pair_counts"],
        "degenerate": degenerate,
        "g2_aa": aa,
        "g2_ba": ba,
        "bootstrap": bool(bootstrap),
    }
    return CorrelationEstimate(
        aa.tau_grid, values, sigma, (A_RED, "R_m"), bin_width, meta
    )


def _bootstrap_witness(rec, tau_max, bin_width, n_boot, block, seed, n_bins):
    if block is None:
        gamma_eff = rec.params.get("gamma_eff")
        if not gamma_eff:
            raise ParameterError("no gamma_eff in record params; pass block explicitly")
        block = 10.0 / gamma_eff
    n_blocks = int(rec.duration / block)
    if n_blocks < 10:
        raise ParameterError("fewer than 10 bootstrap blocks; shorten block")
    rng = np.random.default_rng(seed)
    # pre-split each tag's times into blocks (boundary pairs are lost, which
    # is the usual price of the block bootstrap)
    tags = (A_RED, A_BLUE, B_BLUE)
    split = {}
    for tag in tags:
        t = rec.select(tag)
        edges = np.searchsorted(t, np.arange(n_blocks + 1) * block)
        split[tag] = [t[edges[j]: edges[j + 1]] - j * block for j in range(n_blocks)]
    out = np.empty((n_boot, n_bins))
    duration = n_blocks * block
    for m in range(n_boot):
        pick = rng.integers(0, n_blocks, size=n_blocks)
        resampled = {}
        for tag in tags:
            parts = [split[tag][j] + slot * block for slot, j in enumerate(pick)]
            resampled[tag] = np.concatenate(parts) if parts else np.empty(0)
        try:
            vals = _witness_values_from_times(
                resampled, duration, tau_max, bin_width, n_bins
            )
        except EmptyChannelError:
            vals = np.full(n_bins, np.nan)
        out[m] = vals
    return np.nanstd(out, axis=0, ddof=1)


def _witness_values_from_times(times_by_tag, duration, tau_max, bin_width, n_bins):
    red = times_by_tag[A_RED]
    red = red[red <= duration - tau_max]
    if len(red) == 0:
        raise EmptyChannelError("no red triggers in resample")
    vals = {}
    for tag in (A_BLUE, B_BLUE):
        to = times_by_tag[tag]
        if len(to) == 0:
            raise EmptyChannelError("empty blue channel in resample")
        c = _delay_counts(red, to, n_bins * bin_width, bin_width, n_bins)
        vals[tag] = c * duration / (len(red) * bin_width * len(to))
    values, _ = witness_from_estimates(vals[A_BLUE], vals[B_BLUE], 0.0, 0.0)
    return values


def witness_crossing(est: CorrelationEstimate) -> float | None:
    """First upward crossing of R_m through 1, linearly interpolated.

    Returns None if the curve never starts below 1 or never comes back up
    within the estimated range.  Degenerate bins are skipped.
    """
    good = np.isfinite(est.values)
    degenerate = est.counts.get("degenerate")
    if degenerate is not None:
        good &= ~degenerate
    tau = est.tau_grid[good]
    val = est.values[good]
    if len(val) == 0 or val[0] >= 1.0:
        return None
    above = np.nonzero(val >= 1.0)[0]
    if len(above) == 0:
        return None
    k = above[0]
    t0, t1, v0, v1 = tau[k - 1], tau[k], val[k - 1], val[k]
    return float(t0 + (1.0 - v0) * (t1 - t0) / (v1 - v0))


# ---------------------------------------------------------------------------
# waiting times


@dataclass
class FirstBlueReport:
    """First blue click after each red trigger: delays, detector choice."""

    delays: np.ndarray
    first_detector: np.ndarray
    p_a_first: float
    p_a_sigma: float
    bin_centers: np.ndarray
    p_a_vs_delay: np.ndarray
    p_a_vs_delay_sigma: np.ndarray
    waiting_density: np.ndarray
    waiting_density_sigma: np.ndarray
    n_red: int
    n_unresolved: int
    tail_truncated: bool

    def to_dict(self) -> dict:
        return {
            "p_a_first": self.p_a_first,
            "p_a_sigma": self.p_a_sigma,
            "n_red": self.n_red,
            "n_unresolved": self.n_unresolved,
            "tail_truncated": self.tail_truncated,
            "bin_centers": self.bin_centers.tolist(),
            "p_a_vs_delay": self.p_a_vs_delay.tolist(),
            "waiting_density": self.waiting_density.tolist(),
        }


def first_blue_after_red(
    rec: ClickRecord,
    *,
    trigger: DetectorTag = A_RED,
    n_bins: int = 40,
    max_delay: float | None = None,
) -> FirstBlueReport:
    """Delay and detector of the next blue click after each trigger red."""
    red = rec.select(trigger)
    if len(red) == 0:
        raise EmptyChannelError(f"no {trigger.detector}-{trigger.color} events")
    blue_mask = rec.colors == "blue"
    blue_times = rec.times[blue_mask]
    blue_dets = rec.detectors[blue_mask]
    if len(blue_times) == 0:
        raise EmptyChannelError("no blue events")
    idx = np.searchsorted(blue_times, red, side="right")
    resolved = idx < len(blue_times)
    n_unresolved = int((~resolved).sum())
    delays = blue_times[idx[resolved]] - red[resolved]
    first_det = blue_dets[idx[resolved]]
    is_a = first_det == "A"
    n = len(delays)
    p_a = float(is_a.mean()) if n else math.nan
    p_a_sigma = math.sqrt(max(p_a * (1.0 - p_a), 1.0 / n) / n) if n else math.nan
    if max_delay is None:
        max_delay = float(np.quantile(delays, 0.99)) if n else 1.0
    edges = np.linspace(0.0, max_delay, n_bins + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    inside = delays <= max_delay
    hist, _ = np.histogram(delays[inside], bins=edges)
    hist_a, _ = np.histogram(delays[inside & is_a], bins=edges)
    bw = edges[1] - edges[0]
    density = hist / (n * bw)
    density_sigma = np.sqrt(np.maximum(hist, 1.0)) / (n * bw)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(hist > 0, hist_a / np.maximum(hist, 1), np.nan)
        frac_sigma = np.where(
            hist > 0,
            np.sqrt(np.maximum(frac * (1.0 - frac), 1.0 / np.maximum(hist, 1)))
            / np.sqrt(np.maximum(hist, 1)),
            np.nan,
        )
    return FirstBlueReport(
        delays,
        first_det,
        p_a,
        p_a_sigma,
        centers,
        frac,
        frac_sigma,
        density,
        density_sigma,
        int(len(red)),
        n_unresolved,
        n_unresolved > 0,
    )


# ---------------------------------------------------------------------------
# classical inequalities


@dataclass
class ClassicalReport:
    """Cauchy-Schwarz and ratio-bound tests with per-bin significances.

    cs: [g2_{blue|red}(tau)]^2 <= g2_{red|red}(0+) g2_{blue|blue}(0+); the
    zero-lag values come from the first bin, so bin_width must be well below
    1/gamma_eff.  ratio: (1+K)/(2+K) with K = g2_{blue|red}-1 against the
    classical bound 2/3; both are violated exactly for
    gamma_eff tau < ln((n_m+1)/n_m).
    """

    tau_grid: np.ndarray
    cs_lhs: np.ndarray
    cs_rhs: float
    cs_rhs_sigma: float
    cs_sigma: np.ndarray
    cs_significance: np.ndarray
    ratio_values: np.ndarray
    ratio_sigma: np.ndarray
    ratio_significance: np.ndarray
    predicted_crossover: float | None

    def verdicts(self, min_sigma: float = 3.0) -> dict:
        cs_viol = self.cs_significance > min_sigma
        ratio_viol = self.ratio_significance > min_sigma
        return {
            "cs_violated": bool(cs_viol.any()),
            "cs_max_sigma": float(np.nanmax(self.cs_significance)),
            "cs_last_violated_tau": (
                float(self.tau_grid[cs_viol][-1]) if cs_viol.any() else None
            ),
            "ratio_violated": bool(ratio_viol.any()),
            "ratio_max_sigma": float(np.nanmax(self.ratio_significance)),
            "ratio_last_violated_tau": (
                float(self.tau_grid[ratio_viol][-1]) if ratio_viol.any() else None
            ),
            "predicted_crossover_tau": self.predicted_crossover,
        }

    def save_json(self, path, min_sigma: float = 3.0) -> None:
        with open(path, "w") as f:
            json.dump(self.verdicts(min_sigma), f, indent=2)
            f.write("\n")


def classical_tests(
    rec: ClickRecord,
    tau_max: float,
    bin_width: float,
    *,
    red: DetectorTag | None = None,
    blue: DetectorTag | None = None,
) -> ClassicalReport:
    """Evaluate both classical inequalities on one record.

    Defaults to the single-detector tags when the record carries them,
    otherwise detector A.  Violation significance is reported per bin; the
    crossover prediction uses n_m and gamma_eff from the record params when
    available.
    """
    if red is None or blue is None:
        det = "single" if "single" in rec.detectors else "A"
        red = red or DetectorTag(det, "red")
        blue = blue or DetectorTag(det, "blue")
    g_br = estimate_g2(rec, red, blue, tau_max, bin_width)
    g_rr = estimate_g2(rec, red, red, tau_max, bin_width)
    g_bb = estimate_g2(rec, blue, blue, tau_max, bin_width)
    rr0, s_rr0 = g_rr.values[0], g_rr.std_errors[0]
    bb0, s_bb0 = g_bb.values[0], g_bb.std_errors[0]
    rhs = rr0 * bb0
    rhs_sigma = math.hypot(s_rr0 * bb0, rr0 * s_bb0)
    lhs = g_br.values**2
    lhs_sigma = 2.0 * g_br.values * g_br.std_errors
    cs_sigma = np.hypot(lhs_sigma, rhs_sigma)
    cs_signif = (lhs - rhs) / cs_sigma
    k = g_br.values - 1.0
    ratio = (1.0 + k) / (2.0 + k)
    ratio_sigma = g_br.std_errors / (2.0 + k) ** 2
    ratio_signif = (ratio - 2.0 / 3.0) / ratio_sigma
    n_m = rec.params.get("n_m")
    gamma_eff = rec.params.get("gamma_eff")
    crossover = None
    if n_m and gamma_eff:
        crossover = math.log((n_m + 1.0) / n_m) / gamma_eff
    return ClassicalReport(
        g_br.tau_grid,
        lhs,
        float(rhs),
        float(rhs_sigma),
        cs_sigma,
        cs_signif,
        ratio,
        ratio_sigma,
        ratio_signif,
        crossover,
    )


# ---------------------------------------------------------------------------
# record plumbing


def combine_as_detectors(rec_a: ClickRecord, rec_b: ClickRecord) -> ClickRecord:
    """Merge two records as if their detectors were labelled A and B.

    Intended for null tests: the output mimics a two-detector record while
    carrying no cross coherence whatsoever.
    """
    duration = min(rec_a.duration, rec_b.duration)
    parts = []
    for rec, label in ((rec_a, "A"), (rec_b, "B")):
        keep = rec.times <= duration
        parts.append(
            (rec.times[keep], np.full(int(keep.sum()), label, dtype="<U6"), rec.colors[keep])
        )
    times = np.concatenate([p[0] for p in parts])
    dets = np.concatenate([p[1] for p in parts])
    cols = np.concatenate([p[2] for p in parts])
    order = np.argsort(times, kind="stable")
    params = dict(rec_a.params)
    params["combined"] = True
    return ClickRecord(
        times[order], dets[order], cols[order], duration, None, params
    )
