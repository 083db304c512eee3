"""Monte Carlo wave-function simulation of the conditioned oscillator pair.

The cavity fields are adiabatically eliminated, so clicks come directly from
mechanical jump operators carrying detector and color tags; the spectral
filters survive only as the color labels.  Fast sideband phases are dropped
(colors never interfere and within one color the phase is global); only the
frequency offset delta of the second oscillator stays in the Hamiltonian.

The effective Hamiltonian delta c2^dag c2 - (i/2) sum_k L_k^dag L_k is
diagonal in the joint Fock basis: the beam-splitter cross terms cancel in
the A+B sum, and every other channel is a pure ladder operator.  Between
jumps the state therefore evolves component-wise in closed form, and jump
times are located by solving the survival equation sum w_k e^{-R_k dt} = u
with a safeguarded Newton iteration.  There is no integration time step and
no interpolation error; click times are exact to floating-point roundoff.

Detector conventions: a red click at A conditions the next blue photon onto
detector A with fringe cos^2(delta tau/2 + phi), as in
correlations.g2_two_cavity.  Internally the A/B combinations use the
transfer phase chi = -(phi + pi/2), which is what makes the simulated
coincidences land on that closed form with phi meaning the same thing in
both places.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .correlations import (
    A_BLUE,
    A_RED,
    B_BLUE,
    B_RED,
    SINGLE_BLUE,
    SINGLE_RED,
    DetectorTag,
    concurrence,
)
from .errors import (
    InsufficientClicksError,
    ParameterError,
    RateInconsistencyError,
    TruncationError,
)
from .params import DerivedParams, TwoCavityParams

_BINARY_MAGIC = b"PHPCLKV1"
_TAG_CODES = {
    ("A", "red"): 0,
    ("A", "blue"): 1,
    ("B", "red"): 2,
    ("B", "blue"): 3,
    ("single", "red"): 4,
    ("single", "blue"): 5,
}
_CODE_TAGS = {v: k for k, v in _TAG_CODES.items()}


def _lowering(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1.0, n_max + 1.0)), k=1)


def _pair_lowering(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    a = _lowering(n_max)
    eye = np.eye(n_max + 1)
    return np.kron(a, eye), np.kron(eye, a)


# ---------------------------------------------------------------------------
# states


@dataclass
class JointState:
    """Wave function over the joint Fock basis, shape (n_max+1,)*n_modes."""

    amplitudes: np.ndarray
    time: float = 0.0

    @property
    def n_max(self) -> int:
        return self.amplitudes.shape[0] - 1

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def normalized(self) -> "JointState":
        n = self.norm()
        if n == 0:
            raise ParameterError("cannot normalize a zero state")
        return JointState(self.amplitudes / n, self.time)

    def sector_elements(self):
        """(p00, p01, p10, p11, q, higher) of the 0/1-phonon sector.

        q is the coherence <c2^dag c1> restricted to that sector,
        conj(a[0,1]) * a[1,0]; higher is the weight outside the sector.
        """
        a = self.amplitudes
        if a.ndim != 2:
            raise ParameterError("sector elements are defined for the pair only")
        p00 = abs(a[0, 0]) ** 2
        p01 = abs(a[0, 1]) ** 2
        p10 = abs(a[1, 0]) ** 2
        p11 = abs(a[1, 1]) ** 2
        q = np.conj(a[0, 1]) * a[1, 0]
        return p00, p01, p10, p11, complex(q), 1.0 - (p00 + p01 + p10 + p11)

    @classmethod
    def vacuum(cls, n_max: int, n_modes: int = 2) -> "JointState":
        amp = np.zeros((n_max + 1,) * n_modes, dtype=complex)
        amp[(0,) * n_modes] = 1.0
        return cls(amp)

    @classmethod
    def pair_superposition(cls, n_max: int, theta: float = 0.0) -> "JointState":
        """(|1,0> + e^{i theta}|0,1>)/sqrt(2)."""
        amp = np.zeros((n_max + 1, n_max + 1), dtype=complex)
        amp[1, 0] = 1.0 / math.sqrt(2.0)
        amp[0, 1] = np.exp(1j * theta) / math.sqrt(2.0)
        return cls(amp)


# ---------------------------------------------------------------------------
# channels


@dataclass
class JumpChannel:
    label: str
    operator: np.ndarray
    observed: bool
    tag: DetectorTag | None = None


@dataclass
class ChannelSet:
    """Jump channels plus the diagonal of the effective Hamiltonian.

    decay[k] is the total outflow rate sum <k|L^dag L|k> of basis state k and
    phase[k] its Hermitian frequency (delta times n2); both are verified
    against the assembled operators at build time.
    """

    channels: list[JumpChannel]
    shape: tuple[int, ...]
    delta: float
    decay: np.ndarray
    phase: np.ndarray
    params: dict

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_max(self) -> int:
        return self.shape[0] - 1


def _check_balance(d: DerivedParams) -> None:
    # the summed dissipator must relax to n_m: up/down = n_m/(n_m+1)
    up = d.gamma * d.n_th + d.a_plus
    down = d.gamma * (d.n_th + 1.0) + d.a_minus
    if down == 0:
        if up > 0:
            raise RateInconsistencyError("upward rate without any downward rate")
        return
    want = d.n_m / (d.n_m + 1.0)
    got = up / down
    if abs(got - want) > 1e-9 * (1.0 + want):
        raise RateInconsistencyError(
            f"up/down rate ratio {got:.6e} does not match steady n/(n+1) {want:.6e}"
        )


def _assemble(
    channels: list[JumpChannel], shape: tuple[int, ...], delta: float, params: dict
) -> ChannelSet:
    dim = int(np.prod(shape))
    total = np.zeros((dim, dim), dtype=complex)
    for ch in channels:
        total += ch.operator.conj().T @ ch.operator
    diag = np.diag(total).real.copy()
    off = total - np.diag(np.diag(total))
    scale = max(diag.max(), 1e-30)
    if np.abs(off).max() > 1e-10 * scale:
        raise RateInconsistencyError(
            "summed dissipator is not diagonal; A/B channels are not a "
            "unitary split of the per-oscillator operators"
        )
    if len(shape) == 2:
        n2 = np.indices(shape)[1].ravel().astype(float)
        phase = delta * n2
    else:
        phase = np.zeros(dim)
    return ChannelSet(channels, shape, delta, diag, phase, params)


def build_channels(
    p: TwoCavityParams,
    d: DerivedParams,
    n_max: int = 5,
    eta_esc: float | None = None,
) -> ChannelSet:
    """Observed A/B sideband channels, escape complements, thermal channels.

    d should be the derived parameters of p.cavity1; the pair is assumed
    symmetric (p.validate_symmetric) so one rate set serves both oscillators.
    eta_esc defaults to the detected fraction kappa_r/kappa and can be
    overridden to test observed/unobserved split invariance.
    """
    if n_max < 3:
        raise ParameterError("n_max must be >= 3")
    if eta_esc is None:
        eta_esc = d.eta_esc
    if not 0.0 <= eta_esc <= 1.0:
        raise ParameterError("eta_esc must lie in [0, 1]")
    _check_balance(d)
    c1, c2 = _pair_lowering(n_max)
    phase = np.exp(1j * -(p.phi + np.pi / 2.0))
    chans: list[JumpChannel] = []
    r_blue = eta_esc * d.a_minus / 2.0
    r_red = eta_esc * d.a_plus / 2.0
    if r_blue > 0:
        chans.append(
            JumpChannel("A_blue", np.sqrt(r_blue) * (phase * c2 + 1j * c1), True, A_BLUE)
        )
        chans.append(
            JumpChannel("B_blue", np.sqrt(r_blue) * (c1 + 1j * phase * c2), True, B_BLUE)
        )
    if r_red > 0:
        u1, u2 = c1.conj().T, c2.conj().T
        chans.append(
            JumpChannel("A_red", np.sqrt(r_red) * (phase * u2 + 1j * u1), True, A_RED)
        )
        chans.append(
            JumpChannel("B_red", np.sqrt(r_red) * (u1 + 1j * phase * u2), True, B_RED)
        )
    lost_blue = (1.0 - eta_esc) * d.a_minus
    lost_red = (1.0 - eta_esc) * d.a_plus
    th_down = d.gamma * (d.n_th + 1.0)
    th_up = d.gamma * d.n_th
    for i, c in ((1, c1), (2, c2)):
        u = c.conj().T
        if lost_blue > 0:
            chans.append(JumpChannel(f"escape_blue_{i}", np.sqrt(lost_blue) * c, False))
        if lost_red > 0:
            chans.append(JumpChannel(f"escape_red_{i}", np.sqrt(lost_red) * u, False))
        if th_down > 0:
            chans.append(JumpChannel(f"thermal_down_{i}", np.sqrt(th_down) * c, False))
        if th_up > 0:
            chans.append(JumpChannel(f"thermal_up_{i}", np.sqrt(th_up) * u, False))
    params = {
        "n_max": n_max,
        "eta_esc": eta_esc,
        "delta": p.delta,
        "phi": p.phi,
        "gamma_eff": d.gamma_eff,
        "n_m": d.n_m,
        "a_minus": d.a_minus,
        "a_plus": d.a_plus,
        "gamma": d.gamma,
        "n_th": d.n_th,
    }
    return _assemble(chans, (n_max + 1, n_max + 1), p.delta, params)


def build_single_channels(
    d: DerivedParams, n_max: int = 5, eta_esc: float | None = None
) -> ChannelSet:
    """One oscillator, one detector: color-tagged sideband plus thermal."""
    if n_max < 3:
        raise ParameterError("n_max must be >= 3")
    if eta_esc is None:
        eta_esc = d.eta_esc
    if not 0.0 <= eta_esc <= 1.0:
        raise ParameterError("eta_esc must lie in [0, 1]")
    _check_balance(d)
    c = _lowering(n_max)
    u = c.conj().T
    chans: list[JumpChannel] = []
    if eta_esc * d.a_minus > 0:
        chans.append(
            JumpChannel("blue", np.sqrt(eta_esc * d.a_minus) * c, True, SINGLE_BLUE)
        )
    if eta_esc * d.a_plus > 0:
        chans.append(
            JumpChannel("red", np.sqrt(eta_esc * d.a_plus) * u, True, SINGLE_RED)
        )
    if (1.0 - eta_esc) * d.a_minus > 0:
        chans.append(
            JumpChannel("escape_blue", np.sqrt((1.0 - eta_esc) * d.a_minus) * c, False)
        )
    if (1.0 - eta_esc) * d.a_plus > 0:
        chans.append(
            JumpChannel("escape_red", np.sqrt((1.0 - eta_esc) * d.a_plus) * u, False)
        )
    if d.gamma * (d.n_th + 1.0) > 0:
        chans.append(
            JumpChannel("thermal_down", np.sqrt(d.gamma * (d.n_th + 1.0)) * c, False)
        )
    if d.gamma * d.n_th > 0:
        chans.append(JumpChannel("thermal_up", np.sqrt(d.gamma * d.n_th) * u, False))
    params = {
        "n_max": n_max,
        "eta_esc": eta_esc,
        "delta": 0.0,
        "phi": 0.0,
        "gamma_eff": d.gamma_eff,
        "n_m": d.n_m,
        "a_minus": d.a_minus,
        "a_plus": d.a_plus,
        "gamma": d.gamma,
        "n_th": d.n_th,
    }
    return _assemble(chans, (n_max + 1,), 0.0, params)


# ---------------------------------------------------------------------------
# records


@dataclass
class ClickRecord:
    """Detector- and color-tagged photodetection times from one trajectory."""

    times: np.ndarray
    detectors: np.ndarray
    colors: np.ndarray
    duration: float
    seed: object
    params: dict

    def __post_init__(self):
        if len(self.times) and np.any(np.diff(self.times) <= 0):
            raise ParameterError("click times must be strictly increasing")

    def select(self, tag: DetectorTag) -> np.ndarray:
        mask = (self.detectors == tag.detector) & (self.colors == tag.color)
        return self.times[mask]

    def counts(self, tag: DetectorTag | None = None) -> int:
        if tag is None:
            return len(self.times)
        return int(np.sum((self.detectors == tag.detector) & (self.colors == tag.color)))

    def rate(self, tag: DetectorTag | None = None) -> float:
        return self.counts(tag) / self.duration

    def save_text(self, path) -> None:
        with open(path, "w") as f:
            f.write("# phononpair-clicks v1\n")
            f.write(f"# seed = {json.dumps(self.seed)}\n")
            f.write(f"# duration = {self.duration!r}\n")
            f.write(f"# params = {json.dumps(self.params)}\n")
            f.write(f"# events = {len(self.times)}\n")
            for t, det, col in zip(self.times, self.detectors, self.colors):
                f.write(f"{float(t)!r}\t{det}\t{col}\n")

    @classmethod
    def load_text(cls, path) -> "ClickRecord":
        meta = {}
        times, dets, cols = [], [], []
        with open(path) as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("#"):
                    if "=" in line:
                        key, _, val = line[1:].partition("=")
                        meta[key.strip()] = val.strip()
                    continue
                t, det, col = line.split("\t")
                times.append(float(t))
                dets.append(det)
                cols.append(col)
        return cls(
            np.asarray(times, dtype=float),
            np.asarray(dets, dtype="<U6"),
            np.asarray(cols, dtype="<U4"),
            float(meta["duration"]),
            json.loads(meta.get("seed", "null")),
            json.loads(meta.get("params", "{}")),
        )

    def save_binary(self, path) -> None:
        header = json.dumps(
            {
                "seed": self.seed,
                "duration": self.duration,
                "params": self.params,
                "n": int(len(self.times)),
            }
        ).encode()
        payload = np.empty(len(self.times), dtype=[("time", "<f8"), ("tag", "u1")])
        payload["time"] = self.times
        payload["tag"] = [
            _TAG_CODES[(det, col)] for det, col in zip(self.detectors, self.colors)
        ]
        with open(path, "wb") as f:
            f.write(_BINARY_MAGIC)
            f.write(len(header).to_bytes(4, "little"))
            f.write(header)
            f.write(payload.tobytes())

    @classmethod
    def load_binary(cls, path) -> "ClickRecord":
        with open(path, "rb") as f:
            magic = f.read(len(_BINARY_MAGIC))
            if magic != _BINARY_MAGIC:
                raise ParameterError("not a phononpair binary click record")
            n_header = int.from_bytes(f.read(4), "little")
            header = json.loads(f.read(n_header).decode())
            payload = np.frombuffer(
                f.read(), dtype=[("time", "<f8"), ("tag", "u1")], count=header["n"]
            )
        tags = [_CODE_TAGS[int(code)] for code in payload["tag"]]
        return cls(
            payload["time"].astype(float),
            np.asarray([t[0] for t in tags], dtype="<U6"),
            np.asarray([t[1] for t in tags], dtype="<U4"),
            float(header["duration"]),
            header["seed"],
            header["params"],
        )


@dataclass
class TrajectoryDiagnostics:
    jumps: dict
    truncation_mean: float
    truncation_max: float
    sample_times: np.ndarray | None = None
    occupancies: np.ndarray | None = None
    top_level: np.ndarray | None = None
    coherence: np.ndarray | None = None


class TrajectoryResult(NamedTuple):
    record: ClickRecord
    final_state: JointState
    diagnostics: TrajectoryDiagnostics


# ---------------------------------------------------------------------------
# engine


def _jump_time(w: np.ndarray, rates: np.ndarray, u: float, span: float) -> float:
    """Root of sum w_k e^{-rates_k d} = u, with the root known to be < span.

    The survival sum is convex and decreasing, so Newton from d=0 increases
    monotonically and never overshoots the root.
    """
    d = 0.0
    wr = w * rates
    for _ in range(200):
        e = np.exp(-rates * d)
        s = float(w @ e)
        deriv = float(wr @ e)
        if deriv <= 0.0:
            return span
        d_new = d + (s - u) / deriv
        if d_new > span:
            d_new = span
        if d_new - d <= 1e-13 * (1.0 + d_new):
            return d_new
        d = d_new
    return d


class _GridProbe:
    """Consumes state samples on a fixed time grid."""

    def __init__(self, times: np.ndarray, channels: ChannelSet):
        self.times = times
        self.i = 0
        idx = np.indices(channels.shape).reshape(len(channels.shape), -1)
        self.nvecs = idx.astype(float)
        self.pair = len(channels.shape) == 2
        if self.pair:
            a = _lowering(channels.n_max)
            self.c21 = np.kron(a, a.conj().T)  # c2^dag c1
        self.occ = []
        self.q = []

    def peek(self) -> float:
        return self.times[self.i] if self.i < len(self.times) else math.inf

    def consume(self, t: float, amp: np.ndarray) -> None:
        w = amp.real**2 + amp.imag**2
        self.occ.append(self.nvecs @ w)
        if self.pair:
            self.q.append(complex(np.vdot(amp, self.c21 @ amp)))
        self.i += 1


class _NullProbe:
    def peek(self) -> float:
        return math.inf

    def consume(self, t, amp) -> None:  # pragma: no cover
        raise AssertionError


def _run(channels: ChannelSet, psi: np.ndarray, t_end: float, rng, probe, on_jump):
    """Piecewise-exact trajectory loop on the flattened state.

    probe.peek()/probe.consume(t, psi_normalized) pull state samples at
    arbitrary times (peek may change after on_jump, which is called with
    (t, channel_index, psi_after) after every jump).  Returns the final
    normalized state plus the time integral and maximum of the population
    carried by the truncation edge.
    """
    rates = channels.decay
    phases = channels.phase
    ops = [ch.operator for ch in channels.channels]
    shape_idx = np.indices(channels.shape).reshape(len(channels.shape), -1)
    top = (shape_idx == channels.n_max).any(axis=0)
    trunc_int = 0.0
    trunc_max = 0.0
    t = 0.0
    while t < t_end:
        w = psi.real**2 + psi.imag**2
        p_top = float(w[top].sum())
        trunc_max = max(trunc_max, p_top)
        u = 1.0 - rng.random()
        span = t_end - t
        survival_at_end = float(w @ np.exp(-rates * span))
        if survival_at_end >= u:
            dt = span
            jump = False
        else:
            dt = _jump_time(w, rates, u, span)
            jump = True
        t_next = t + dt
        while True:
            s = probe.peek()
            if s > t_next or s > t_end:
                break
            amp = psi * np.exp(-(0.5 * rates + 1j * phases) * (s - t))
            amp = amp / np.sqrt(np.vdot(amp, amp).real)
            probe.consume(s, amp)
        psi = psi * np.exp(-(0.5 * rates + 1j * phases) * dt)
        psi = psi / np.sqrt(np.vdot(psi, psi).real)
        w_next = psi.real**2 + psi.imag**2
        p_top_next = float(w_next[top].sum())
        trunc_max = max(trunc_max, p_top_next)
        trunc_int += 0.5 * (p_top + p_top_next) * dt
        if jump:
            cands = [op @ psi for op in ops]
            wts = np.array([np.vdot(c, c).real for c in cands])
            total = wts.sum()
            pick = int(np.searchsorted(np.cumsum(wts), rng.random() * total, "right"))
            pick = min(pick, len(cands) - 1)
            psi = cands[pick] / math.sqrt(wts[pick])
            on_jump(t_next, pick, psi)
        t = t_next
    return psi, trunc_int, trunc_max


def _check_truncation(trunc_int, trunc_max, t_end, eps_trunc, n_max):
    mean = trunc_int / t_end
    if mean > eps_trunc:
        raise TruncationError(
            f"time-averaged population {mean:.3e} on the n={n_max} edge exceeds "
            f"eps_trunc={eps_trunc:.1e} (peak {trunc_max:.3e}); raise n_max"
        )
    return mean


def evolve(
    channels: ChannelSet,
    initial: JointState | None = None,
    duration: float = 100.0,
    seed=None,
    *,
    burn_in: float = 0.0,
    sample_times: np.ndarray | None = None,
    eps_trunc: float = 1e-2,
) -> TrajectoryResult:
    """One trajectory; deterministic given (channels, initial, seed).

    Click times in the returned record are measured from the end of burn_in,
    as are sample_times (which must lie in [0, duration]).  eps_trunc bounds
    the time-averaged population of the truncation edge; the peak value is
    reported in the diagnostics.
    """
    if duration <= 0:
        raise ParameterError("duration must be positive")
    rng = np.random.default_rng(seed)
    if initial is None:
        initial = JointState.vacuum(channels.n_max, len(channels.shape))
    if initial.amplitudes.shape != channels.shape:
        raise ParameterError("initial state shape does not match channels")
    psi = initial.normalized().amplitudes.ravel().copy()
    t_end = burn_in + duration
    if sample_times is not None:
        sample_times = np.asarray(sample_times, dtype=float)
        if np.any(sample_times < 0) or np.any(sample_times > duration):
            raise ParameterError("sample_times must lie in [0, duration]")
        probe = _GridProbe(burn_in + sample_times, channels)
    else:
        probe = _NullProbe()

    click_t: list[float] = []
    click_det: list[str] = []
    click_col: list[str] = []
    jumps = {ch.label: 0 for ch in channels.channels}

    def on_jump(t, idx, psi_after):
        ch = channels.channels[idx]
        jumps[ch.label] += 1
        if ch.observed and t >= burn_in:
            click_t.append(t - burn_in)
            click_det.append(ch.tag.detector)
            click_col.append(ch.tag.color)

    psi, trunc_int, trunc_max = _run(channels, psi, t_end, rng, probe, on_jump)
    trunc_mean = _check_truncation(trunc_int, trunc_max, t_end, eps_trunc, channels.n_max)
    record = ClickRecord(
        np.asarray(click_t, dtype=float),
        np.asarray(click_det, dtype="<U6"),
        np.asarray(click_col, dtype="<U4"),
        duration,
        _seed_descriptor(seed),
        channels.params,
    )
    diag = TrajectoryDiagnostics(jumps, trunc_mean, trunc_max)
    if sample_times is not None:
        diag.sample_times = sample_times
        diag.occupancies = np.asarray(probe.occ)
        if probe.pair:
            diag.coherence = np.asarray(probe.q)
    final = JointState(psi.reshape(channels.shape), duration)
    return TrajectoryResult(record, final, diag)


def _seed_descriptor(seed):
    if seed is None or isinstance(seed, (int, np.integer)):
        return None if seed is None else int(seed)
    if isinstance(seed, np.random.SeedSequence):
        return {
            "entropy": str(seed.entropy),
            "spawn_key": [int(k) for k in seed.spawn_key],
        }
    return str(seed)


def run_ensemble(
    channels: ChannelSet,
    n_records: int,
    duration: float,
    seed=None,
    **kwargs,
) -> list[TrajectoryResult]:
    """Independent trajectories with per-record seeds spawned from one root.

    Records are independent tasks; this runner is sequential but the spawned
    SeedSequence children make any execution order (or a parallel map)
    produce identical results.
    """
    root = np.random.SeedSequence(seed)
    out = []
    for i, child in enumerate(root.spawn(n_records)):
        res = evolve(channels, duration=duration, seed=child, **kwargs)
        res.record.seed = {"root": seed, "index": i}
        out.append(res)
    return out


# ---------------------------------------------------------------------------
# conditioning on a red click


@dataclass
class ConditionalDensity:
    """Ensemble-averaged 0/1-sector state versus delay after a red click.

    sem holds standard errors of the mean for keys p00, p01, p10, p11,
    higher, q_re, q_im; separability_sigma is the first-order-propagated
    standard error of p00 p11/|q|^2 (the exact separability criterion, < 1
    iff the sector state is entangled).
    """

    tau_since_red: np.ndarray
    p00: np.ndarray
    p01: np.ndarray
    p10: np.ndarray
    p11: np.ndarray
    higher_fock: np.ndarray
    q: np.ndarray
    n_clicks: int
    concurrence: np.ndarray
    separability_ratio: np.ndarray
    separability_sigma: np.ndarray
    sem: dict


def conditional_after_red(
    channels: ChannelSet,
    n_records: int,
    duration: float,
    seed=None,
    *,
    tau_grid: np.ndarray | None = None,
    burn_in: float | None = None,
    min_clicks: int = 100,
    trigger: DetectorTag = A_RED,
    eps_trunc: float = 1e-2,
) -> ConditionalDensity:
    """Track the conditioned sector state after each trigger red click.

    Every steady-state trigger click that fits inside the record opens a
    window, and the same trajectory supplies the subsequent (unconditioned on
    average) evolution, sampled on tau_grid.  Windows may overlap: red clicks
    bunch, and dropping triggers that land inside an open window would
    undersample exactly the high-occupancy episodes, biasing q low.
    """
    if len(channels.shape) != 2:
        raise ParameterError("conditioning is defined for the oscillator pair")
    if trigger.color != "red":
        raise ParameterError("trigger must be a red detector tag")
    trig_idx = {
        i for i, ch in enumerate(channels.channels) if ch.observed and ch.tag == trigger
    }
    if not trig_idx:
        raise ParameterError(f"no observed channel with tag {trigger}")
    gamma_eff = channels.params["gamma_eff"]
    if tau_grid is None:
        tau_grid = np.linspace(0.0, 2.5 / gamma_eff, 26)
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid[0] != 0.0 or np.any(np.diff(tau_grid) <= 0):
        raise ParameterError("tau_grid must start at 0 and increase")
    if burn_in is None:
        burn_in = 12.0 / gamma_eff
    tau_max = tau_grid[-1]
    t_end = burn_in + duration
    n_tau = len(tau_grid)
    dim_side = channels.shape[0]

    sums = np.zeros((7, n_tau))
    m2 = np.zeros((7, 7, n_tau))
    n_clicks = 0
    root = np.random.SeedSequence(seed)
    for child in root.spawn(n_records):
        rng = np.random.default_rng(child)
        psi = JointState.vacuum(channels.n_max).amplitudes.ravel()

        windows: list[dict] = []  # each: start time t0, next grid index i, buffer

        class Probe:
            def peek(self_probe) -> float:
                if not windows:
                    return math.inf
                return min(w["t0"] + tau_grid[w["i"]] for w in windows)

            def consume(self_probe, t, amp) -> None:
                nonlocal n_clicks, sums, m2
                a = amp.reshape(dim_side, dim_side)
                p00 = abs(a[0, 0]) ** 2
                p01 = abs(a[0, 1]) ** 2
                p10 = abs(a[1, 0]) ** 2
                p11 = abs(a[1, 1]) ** 2
                qv = np.conj(a[0, 1]) * a[1, 0]
                x = (
                    p00,
                    p01,
                    p10,
                    p11,
                    1.0 - (p00 + p01 + p10 + p11),
                    qv.real,
                    qv.imag,
                )
                for w in windows:
                    if w["t0"] + tau_grid[w["i"]] == t:
                        w["buf"][:, w["i"]] = x
                        w["i"] += 1
                        if w["i"] == n_tau:
                            sums += w["buf"]
                            m2 += np.einsum("it,jt->ijt", w["buf"], w["buf"])
                            n_clicks += 1
                            windows.remove(w)
                        break

        def on_jump(t, idx, psi_after):
            if idx in trig_idx and t >= burn_in and t + tau_max <= t_end:
                windows.append({"t0": t, "i": 0, "buf": np.zeros((7, n_tau))})

        psi, trunc_int, trunc_max = _run(channels, psi, t_end, rng, Probe(), on_jump)
        _check_truncation(trunc_int, trunc_max, t_end, eps_trunc, channels.n_max)

    if n_clicks < min_clicks:
        raise InsufficientClicksError(
            f"only {n_clicks} usable {trigger.detector}-{trigger.color} clicks "
            f"(need {min_clicks}); extend duration or n_records"
        )
    mean = sums / n_clicks
    # sample covariance of the mean, per tau point
    cov = (m2 / n_clicks - np.einsum("it,jt->ijt", mean, mean)) * (
        n_clicks / (n_clicks - 1.0) / n_clicks
    )
    p00, p01, p10, p11, higher, q_re, q_im = mean
    q = q_re + 1j * q_im
    q2 = q_re**2 + q_im**2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q2 > 0, p00 * p11 / np.where(q2 > 0, q2, 1.0), np.inf)
        grad = np.zeros((7, n_tau))
        grad[0] = p11 / q2
        grad[3] = p00 / q2
        grad[5] = -2.0 * q_re * ratio / q2
        grad[6] = -2.0 * q_im * ratio / q2
        var = np.einsum("it,ijt,jt->t", grad, cov, grad)
        sigma = np.sqrt(np.maximum(var, 0.0))
    conc = np.asarray(concurrence(p00, p11, np.abs(q)))
    sem_keys = ("p00", "p01", "p10", "p11", "higher", "q_re", "q_im")
    sem = {k: np.sqrt(np.maximum(cov[i, i], 0.0)) for i, k in enumerate(sem_keys)}
    return ConditionalDensity(
        tau_grid,
        p00,
        p01,
        p10,
        p11,
        higher,
        q,
        n_clicks,
        conc,
        ratio,
        sigma,
        sem,
    )
