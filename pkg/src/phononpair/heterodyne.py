"""Heterodyne records: surrogate synthesis, diffusive unraveling, g2 recovery.

The complex photocurrent of each detector carries both sidebands as tones at
-omega_m (blue) and +omega_m (red) on top of a white shot-noise floor of
power spectral density noise_floor (E|n_k|^2 = noise_floor/dt per sample).
Reconstruction demodulates each tone, narrows it with a unit-DC-gain kernel
of bandwidth lambda, normalizes by band powers estimated from the
periodogram (median-based floor subtraction, Lorentzian tail correction),
and recovers the intensity cross-correlations through the Gaussian moment
factorization g2 = 1 + (|Lambda|^2 + |Gamma|^2)/(W_i W_j) with
Lambda(tau) = <b(t+tau) r(t)> and Gamma(tau) = <b(t+tau) r*(t)>.

Sample k of every record represents time (k + 1/2) dt.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .errors import AliasingError, FloorFitError, ParameterError
from .jumps import ChannelSet, _seed_descriptor, build_channels, build_single_channels
from .params import DerivedParams, TwoCavityParams, derive

_BINARY_MAGIC = b"PHPHETV1"


@dataclass
class HeterodyneRecord:
    """Complex photocurrents per detector, shape (n_records, n_samples)."""

    records: dict
    dt: float
    duration: float
    omega_m: float
    seed: object
    params: dict
    samples: dict | None = None

    @property
    def n_records(self) -> int:
        return next(iter(self.records.values())).shape[0]

    @property
    def n_samples(self) -> int:
        return next(iter(self.records.values())).shape[1]

    def times(self) -> np.ndarray:
        return (np.arange(self.n_samples) + 0.5) * self.dt

    def scaled(self, factor: complex) -> "HeterodyneRecord":
        """Same record through an extra complex gain; for invariance checks."""
        return HeterodyneRecord(
            {det: factor * rec for det, rec in self.records.items()},
            self.dt,
            self.duration,
            self.omega_m,
            self.seed,
            dict(self.params),
            self.samples,
        )

    def save_binary(self, path) -> None:
        detectors = sorted(self.records)
        header = {
            "dt": self.dt,
            "duration": self.duration,
            "omega_m": self.omega_m,
            "seed": _seed_descriptor(self.seed),
            "params": self.params,
            "detectors": detectors,
            "shape": [self.n_records, self.n_samples],
        }
        blob = json.dumps(header).encode()
        with open(path, "wb") as f:
            f.write(_BINARY_MAGIC)
            f.write(np.uint32(len(blob)).tobytes())
            f.write(blob)
            for det in detectors:
                r = self.records[det]
                inter = np.empty(r.shape + (2,))
                inter[..., 0] = r.real
                inter[..., 1] = r.imag
                f.write(inter.astype("<f8").tobytes())

    @classmethod
    def load_binary(cls, path) -> "HeterodyneRecord":
        with open(path, "rb") as f:
            if f.read(len(_BINARY_MAGIC)) != _BINARY_MAGIC:
                raise ParameterError("not a phononpair heterodyne record")
            n = int(np.frombuffer(f.read(4), dtype=np.uint32)[0])
            header = json.loads(f.read(n).decode())
            shape = tuple(header["shape"])
            records = {}
            for det in header["detectors"]:
                raw = np.frombuffer(
                    f.read(shape[0] * shape[1] * 16), dtype="<f8"
                ).reshape(shape + (2,))
                records[det] = raw[..., 0] + 1j * raw[..., 1]
        return cls(
            records,
            header["dt"],
            header["duration"],
            header["omega_m"],
            header["seed"],
            header["params"],
        )


# ---------------------------------------------------------------------------
# classical surrogate


def synthesize_surrogate(
    d: DerivedParams,
    duration: float,
    seed=None,
    *,
    n_records: int = 1,
    dt: float = 1e-3,
    noise_floor: float = 1.0,
    omega_m: float | None = None,
    detector: str = "single",
) -> HeterodyneRecord:
    """Classical stand-in with the correct singles rates and linewidth.

    A single complex Ornstein-Uhlenbeck amplitude c(t) with <|c|^2> = n_m and
    amplitude decay gamma_eff/2 feeds both tones, the red one through c*(t).
    Every cross-color moment is therefore classical: the reconstructed
    g2_{blue|red} is 1 + e^{-gamma_eff tau}, with no occupancy enhancement.
    Used to calibrate the reconstruction chain end to end.
    """
    if duration <= 0 or dt <= 0:
        raise ParameterError("duration and dt must be positive")
    if omega_m is None:
        omega_m = d.omega_m_eff
    n_steps = int(round(duration / dt))
    rng = np.random.default_rng(seed)
    g, n_mean = d.gamma_eff, d.n_m
    a = math.exp(-0.5 * g * dt)
    # exact stationary OU update: c_{k+1} = a c_k + sqrt(n_mean(1-a^2)) zeta_k
    noise = rng.standard_normal((n_records, n_steps, 2)) @ np.array([1.0, 1.0j])
    innov = math.sqrt(n_mean * (1.0 - a * a) / 2.0) * noise
    c = lfilter([1.0], [1.0, -a], innov, axis=1)
    c0 = math.sqrt(n_mean / 2.0) * (
        rng.standard_normal((n_records, 1)) + 1j * rng.standard_normal((n_records, 1))
    )
    c += c0 * a ** np.arange(1, n_steps + 1)
    t = (np.arange(n_steps) + 0.5) * dt
    shot = rng.standard_normal((n_records, n_steps, 2)) @ np.array([1.0, 1.0j])
    shot *= math.sqrt(noise_floor / (2.0 * dt))
    rec = (
        math.sqrt(d.f_b / n_mean) * c * np.exp(-1j * omega_m * t)
        + math.sqrt(d.f_r / n_mean) * c.conj() * np.exp(1j * omega_m * t)
        + shot
    )
    params = {
        "gamma_eff": g,
        "n_m": n_mean,
        "f_b": d.f_b,
        "f_r": d.f_r,
        "noise_floor": noise_floor,
        "surrogate": True,
    }
    return HeterodyneRecord({detector: rec}, dt, n_steps * dt, omega_m, seed, params)


# ---------------------------------------------------------------------------
# diffusive unraveling


def _qsd_run(
    channels: ChannelSet,
    omega_m: float,
    duration: float,
    dt: float,
    seed,
    n_records: int,
    burn_in: float,
    sample_every: int,
):
    dim = channels.dim
    n_burn = int(round(burn_in / dt))
    n_steps = int(round(duration / dt))
    ops = np.stack([ch.operator.T.astype(complex) for ch in channels.channels])
    obs = [i for i, ch in enumerate(channels.channels) if ch.observed]
    n_ch = len(channels.channels)
    g = 1.0 - dt * (0.5 * channels.decay + 1j * channels.phase)
    rng = np.random.default_rng(seed)
    psi = np.zeros((n_records, dim), dtype=complex)
    psi[:, 0] = 1.0
    currents = np.empty((len(obs), n_records, n_steps), dtype=complex)
    if len(channels.shape) == 2:
        n1, n2 = np.indices(channels.shape)
        nvec = (n1 + n2).ravel().astype(float)
    else:
        nvec = np.arange(dim, dtype=float)
    n_samp = max(1, n_steps // sample_every)
    occ = np.empty((n_records, n_samp))
    occ_times = np.empty(n_samp)
    root = math.sqrt(dt / 2.0)
    chunk = 2048
    j_samp = 0
    for start in range(-n_burn, n_steps, chunk):
        stop = min(start + chunk, n_steps)
        xi = root * (
            rng.standard_normal((stop - start, n_ch, n_records, 2))
            @ np.array([1.0, 1.0j])
        )
        for s in range(start, stop):
            dxi = xi[s - start]
            lpsi = np.matmul(psi[None, :, :], ops)
            e = np.einsum("rd,krd->kr", psi.conj(), lpsi)
            coef = e.conj() * dt + dxi
            new = psi * g
            new += np.einsum("kr,krd->rd", coef, lpsi)
            new -= (0.5 * dt * (np.abs(e) ** 2).sum(0) + (e * dxi).sum(0))[
                :, None
            ] * psi
            norm = np.sqrt((np.abs(new) ** 2).sum(axis=1, keepdims=True))
            psi = new / norm
            if s >= 0:
                currents[:, :, s] = e[obs] + dxi[obs].conj() / dt
                if s % sample_every == 0 and j_samp < n_samp:
                    occ[:, j_samp] = (np.abs(psi) ** 2) @ nvec
                    occ_times[j_samp] = (s + 0.5) * dt
                    j_samp += 1
    t = (np.arange(n_steps) + 0.5) * dt
    records = {}
    for pos, i in enumerate(obs):
        tag = channels.channels[i].tag
        tone = np.exp((-1j if tag.color == "blue" else 1j) * omega_m * t)
        det = tag.detector
        if det not in records:
            records[det] = np.zeros((n_records, n_steps), dtype=complex)
        records[det] += currents[pos] * tone
    samples = {"times": occ_times[:j_samp], "occupancy": occ[:, :j_samp]}
    return records, samples


def unravel_qsd_single(
    d: DerivedParams,
    duration: float,
    seed=None,
    *,
    n_records: int = 1,
    dt: float = 1e-3,
    n_max: int = 3,
    eta: float | None = None,
    omega_m: float | None = None,
    burn_in: float | None = None,
    sample_every: int = 200,
) -> HeterodyneRecord:
    """Heterodyne record of one oscillator under continuous weak monitoring.

    The observed sideband channels evolve the state diffusively along with
    the unobserved escape and thermal channels, whose noise is consumed but
    whose currents are discarded.  The returned record statistics reproduce
    the normally ordered sideband correlations on top of a unit noise floor.
    """
    channels = build_single_channels(d, n_max=n_max, eta_esc=eta)
    if omega_m is None:
        omega_m = d.omega_m_eff
    if burn_in is None:
        burn_in = 10.0 / d.gamma_eff
    records, samples = _qsd_run(
        channels, omega_m, duration, dt, seed, n_records, burn_in, sample_every
    )
    params = dict(channels.params)
    # one unit of shot noise per monitored color on the detector
    params["noise_floor"] = 2.0
    return HeterodyneRecord(
        records, dt, int(round(duration / dt)) * dt, omega_m, seed, params, samples
    )


def unravel_qsd(
    p: TwoCavityParams,
    duration: float,
    seed=None,
    *,
    d: DerivedParams | None = None,
    n_records: int = 1,
    dt: float = 1e-3,
    n_max: int = 3,
    eta: float | None = None,
    omega_m: float | None = None,
    burn_in: float | None = None,
    sample_every: int = 200,
) -> HeterodyneRecord:
    """Two-detector heterodyne record of the beam-splitter pair."""
    if d is None:
        d = derive(p.cavity1)
    channels = build_channels(p, d, n_max=n_max, eta_esc=eta)
    if omega_m is None:
        omega_m = d.omega_m_eff
    if burn_in is None:
        burn_in = 10.0 / d.gamma_eff
    records, samples = _qsd_run(
        channels, omega_m, duration, dt, seed, n_records, burn_in, sample_every
    )
    params = dict(channels.params)
    params["noise_floor"] = 2.0
    return HeterodyneRecord(
        records, dt, int(round(duration / dt)) * dt, omega_m, seed, params, samples
    )


# ---------------------------------------------------------------------------
# sideband filtering


def _kernel(kind: str, lam: float, dt: float) -> np.ndarray:
    if kind == "gaussian":
        half = int(math.ceil(6.0 / (lam * dt)))
        t = np.arange(-half, half + 1) * dt
        k = np.exp(-0.5 * (lam * t) ** 2)
    elif kind == "raised_cosine":
        h = 4.0 / lam
        half = int(math.ceil(h / dt))
        t = np.arange(-half, half + 1) * dt
        k = np.where(np.abs(t) < h, 0.5 * (1.0 + np.cos(np.pi * t / h)), 0.0)
    else:
        raise ParameterError(f"unknown kernel '{kind}'")
    return k / k.sum()


@dataclass
class FilteredStreams:
    """Demodulated, band-narrowed sideband envelopes per detector."""

    source: HeterodyneRecord
    lam: float
    kernel: str
    blue: dict = field(default_factory=dict)
    red: dict = field(default_factory=dict)

    @property
    def trim(self) -> int:
        # settle region of the kernel at each record edge, in samples
        return int(math.ceil(6.0 / (self.lam * self.source.dt)))


def filter_sidebands(
    rec: HeterodyneRecord, lam: float | None = None, *, kernel: str = "gaussian"
) -> FilteredStreams:
    """Split each record into blue/red envelopes with unit gain on the tone.

    lam is the angular filter bandwidth (|G(omega)|^2 = e^{-omega^2/lam^2}
    for the gaussian kernel); default 8 gamma_eff rejects the opposite
    sideband at 2 omega_m while keeping the Lorentzian tails.
    """
    if lam is None:
        gamma_eff = rec.params.get("gamma_eff")
        if not gamma_eff:
            raise ParameterError("no gamma_eff in record params; pass lam explicitly")
        lam = 8.0 * gamma_eff
    if (rec.omega_m + 3.0 * lam) * rec.dt > np.pi:
        raise AliasingError(
            "sidebands alias: (omega_m + 3 lambda) dt exceeds pi; reduce dt"
        )
    if lam * rec.dt > 0.5:
        raise AliasingError("filter bandwidth is not resolved at this dt")
    k = _kernel(kernel, lam, rec.dt)
    t = rec.times()
    out = FilteredStreams(rec, lam, kernel)
    up = np.exp(1j * rec.omega_m * t)
    for det, r in rec.records.items():
        out.blue[det] = fftconvolve(r * up, k[None, :], mode="same", axes=-1)
        out.red[det] = fftconvolve(r * up.conj(), k[None, :], mode="same", axes=-1)
    return out


# ---------------------------------------------------------------------------
# reconstruction


def _periodogram(x: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Two-sided power spectral density; sum(P)/(N dt) = mean |x|^2."""
    n = x.shape[-1]
    p = dt * np.abs(np.fft.fft(x, axis=-1)) ** 2 / n
    w = 2.0 * np.pi * np.fft.fftfreq(n, dt)
    return w, p


def _floor_estimate(raw_seg: np.ndarray, dt: float, omega_m: float, lam: float):
    w, p = _periodogram(raw_seg, dt)
    mask = (np.abs(w - omega_m) > 4.0 * lam) & (np.abs(w + omega_m) > 4.0 * lam)
    if mask.sum() < 32:
        raise FloorFitError("too few periodogram bins outside the sideband mask")
    # exponential bin statistics: median = floor ln 2
    floor = float(np.median(p[mask]) / math.log(2.0))
    if not np.isfinite(floor) or floor <= 0:
        raise FloorFitError("noise floor estimate is not positive")
    return floor


def _band_power(demod_seg: np.ndarray, dt: float, lam: float, floor: float) -> float:
    w, p = _periodogram(demod_seg, dt)
    band = np.abs(w) <= 0.5 * lam
    n = demod_seg.shape[-1]
    return float((p[band].sum() - floor * band.sum()) / (n * dt))


@dataclass
class G2Reconstruction:
    """Normalized intensity correlation recovered from heterodyne records."""

    tau_grid: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    trigger: tuple
    target: tuple
    w_trigger: float
    w_target: float
    floor: dict
    capture: float
    lam: float
    params: dict

    def save_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["tau", "value", "std_error", "counts"])
            for tau, v, s in zip(self.tau_grid, self.values, self.std_errors):
                w.writerow([repr(float(tau)), repr(float(v)), repr(float(s)), ""])


def _filtered_noise_acf(kernel: np.ndarray, lags: np.ndarray, dt: float) -> np.ndarray:
    """E[y(t+m dt) y*(t)] for unit-floor white noise through the kernel."""
    full = np.correlate(kernel, kernel, "full")
    center = len(kernel) - 1
    out = np.zeros(len(lags))
    inside = center + lags < len(full)
    out[inside] = full[center + lags[inside]] / dt
    return out


def reconstruct_g2(
    streams: FilteredStreams,
    trigger: tuple[str, str],
    target: tuple[str, str],
    tau_grid: np.ndarray | None = None,
    *,
    n_segments: int = 20,
    tail_correction: bool = True,
) -> G2Reconstruction:
    """g2_{target|trigger}(tau) with jackknife errors over time segments.

    trigger and target are (detector, color) pairs; tau_grid must start at
    or above 0.5/gamma_eff, below which the kernel smoothing biases the
    correlators.  Band powers W subtract the measured floor and, with
    tail_correction, divide out the out-of-band Lorentzian fraction
    1 - (2/pi) arctan(lambda/gamma_eff).  For trigger == target the known
    autocorrelation of the filtered floor is subtracted from Gamma.
    """
    rec = streams.source
    gamma_eff = rec.params.get("gamma_eff")
    if not gamma_eff:
        raise ParameterError("records carry no gamma_eff")
    if tau_grid is None:
        tau_grid = np.arange(0.5, 3.01, 0.25) / gamma_eff
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.min() < 0.5 / gamma_eff - 1e-12:
        raise ParameterError("tau grid must start at or above 0.5/gamma_eff")
    lags = np.round(tau_grid / rec.dt).astype(int)

    def pick(pair):
        det, color = pair
        bank = streams.blue if color == "blue" else streams.red
        if det not in bank:
            raise ParameterError(f"no detector '{det}' in record")
        return bank[det]

    trim = streams.trim
    sl = slice(trim, rec.n_samples - trim)
    x_to = pick(target)[:, sl]
    x_from = pick(trigger)[:, sl]
    t = rec.times()[sl]
    up = np.exp(1j * rec.omega_m * t)
    n_rec, n_keep = x_to.shape
    per_rec = max(1, int(math.ceil(n_segments / n_rec)))
    seg_len = n_keep // per_rec
    if seg_len <= 2 * lags.max():
        raise ParameterError("segments shorter than twice the largest lag")
    n_seg = n_rec * per_rec

    lam_c = np.empty((n_seg, len(lags)), dtype=complex)
    gam_c = np.empty((n_seg, len(lags)), dtype=complex)
    w_from = np.empty(n_seg)
    w_to = np.empty(n_seg)
    floors = np.empty(n_seg)
    capture = 1.0
    if tail_correction:
        capture = 2.0 / math.pi * math.atan(streams.lam / gamma_eff)
    s = 0
    for r in range(n_rec):
        raw = rec.records[trigger[0]][:, sl][r]
        raw_to = rec.records[target[0]][:, sl][r]
        for j in range(per_rec):
            seg = slice(j * seg_len, (j + 1) * seg_len)
            floor = _floor_estimate(raw[seg], rec.dt, rec.omega_m, streams.lam)
            floor_to = floor
            if target[0] != trigger[0]:
                floor_to = _floor_estimate(
                    raw_to[seg], rec.dt, rec.omega_m, streams.lam
                )
            tone_from = up[seg].conj() if trigger[1] == "red" else up[seg]
            tone_to = up[seg].conj() if target[1] == "red" else up[seg]
            w_from[s] = _band_power(raw[seg] * tone_from, rec.dt, streams.lam, floor)
            w_to[s] = _band_power(raw_to[seg] * tone_to, rec.dt, streams.lam, floor_to)
            floors[s] = floor
            a = x_to[r, seg]
            b = x_from[r, seg]
            for q, m in enumerate(lags):
                prod = a[m:] * b[: seg_len - m]
                lam_c[s, q] = prod.mean()
                gam_c[s, q] = (a[m:] * b[: seg_len - m].conj()).mean()
            s += 1

    w_from_tot = w_from.mean() / capture
    w_to_tot = w_to.mean() / capture
    noise_acf = _filtered_noise_acf(
        _kernel(streams.kernel, streams.lam, rec.dt), lags, rec.dt
    )

    def assemble(keep):
        lam_m = lam_c[keep].mean(axis=0)
        gam_m = gam_c[keep].mean(axis=0)
        if trigger == target:
            gam_m = gam_m - floors[keep].mean() * noise_acf
        wf = w_from[keep].mean() / capture
        wt = w_to[keep].mean() / capture
        return 1.0 + (np.abs(lam_m) ** 2 + np.abs(gam_m) ** 2) / (wf * wt)

    all_idx = np.arange(n_seg)
    values = assemble(all_idx)
    if n_seg > 1:
        loo = np.stack([assemble(all_idx != i) for i in range(n_seg)])
        std = np.sqrt((n_seg - 1) / n_seg * ((loo - loo.mean(0)) ** 2).sum(0))
    else:
        std = np.full(len(tau_grid), np.nan)
    return G2Reconstruction(
        tau_grid,
        values,
        std,
        trigger,
        target,
        w_from_tot,
        w_to_tot,
        {trigger[0]: floors.mean()},
        capture,
        streams.lam,
        dict(rec.params),
    )
