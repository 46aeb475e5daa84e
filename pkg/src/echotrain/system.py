"""The general plant: a linear dynamic system with nonlinear feedback.

Forward evolution (discrete, per sample i):

    x[i] = (W_sa * s)[i] + (W_aa * a)[i]       pre-activation
    a[i], J[:,i] = f(x[i])                     state and Jacobian diagonal
    o[i] = (W_so * s)[i] + (W_ao * a)[i]

W_aa is strictly causal (tap 0 exactly zero), so the recursion is explicit.
The backward pass runs the reciprocal medium: errors propagate through the
transposed kernels, anti-causally, gated by the recorded Jacobian trace:

    e_a[i] = J[:,i] * ( dt sum_k W_ao[k].T e_o[i+k] + dt sum_k W_aa[k].T e_a[i+k] )
    e_s[i] =           dt sum_k W_sa[k].T e_a[i+k] + dt sum_k W_so[k].T e_o[i+k]

Error signals are gradient densities: dC/d(sample) = dt * e[sample].  With that
convention the continuous-time equations hold verbatim and every dt factor in
the parameter gradients is fixed by finite-difference validation (see
gradients module).

Noise, when configured, is measurement noise: the dynamics run clean and the
recorded/measured signals (o, a forward; the adjoint feedback and e_s backward)
carry additive Gaussian noise at the configured SNR.  Backward-path distortion
(error rescaling, gamma, clipping at the plant's intensity limits) models the
physical backward run of an optical plant and is off unless configured.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DimensionError
from .signal import Kernel, Signal, adjoint_convolve, convolve


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise f with a binary Jacobian diagonal (1 where locally identity)."""

    kind: str  # "rectifier" | "clip" | "identity"
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rectifier", "clip", "identity"):
            raise ConfigurationError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "clip" and not (self.lo < self.hi):
            raise ConfigurationError(f"clip needs lo < hi, got ({self.lo}, {self.hi})")

    @staticmethod
    def rectifier() -> "Nonlinearity":
        return Nonlinearity("rectifier")

    @staticmethod
    def clip(lo: float, hi: float) -> "Nonlinearity":
        return Nonlinearity("clip", float(lo), float(hi))

    @staticmethod
    def identity() -> "Nonlinearity":
        return Nonlinearity("identity")


def apply_nonlinearity(f: Nonlinearity, x: np.ndarray):
    """Return (f(x), jac_diag).  jac is 0 at the rectifier origin and at clip
    boundaries (fixed subgradient choice, keeps reruns deterministic)."""
    x = np.asarray(x, dtype=np.float64)
    if f.kind == "identity":
        return x.copy(), np.ones_like(x)
    if f.kind == "rectifier":
        jac = (x > 0.0).astype(np.float64)
        return x * jac, jac
    jac = ((x > f.lo) & (x < f.hi)).astype(np.float64)
    return np.clip(x, f.lo, f.hi), jac


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise at snr_db relative to each measured signal's power."""

    snr_db: float
    on_forward: bool = True
    on_backward: bool = False

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ConfigurationError("snr_db must be finite")

    def std_for(self, samples: np.ndarray) -> float:
        power = float(np.mean(np.square(samples))) if samples.size else 0.0
        return float(np.sqrt(power / 10.0 ** (self.snr_db / 10.0)))


@dataclass(frozen=True)
class BackwardPath:
    """Distortion the error signal suffers on the physical backward run.

    normalize_peak: rescale the injected e_o to this peak amplitude (None = off).
    scale:          extra gain gamma in (0, 1] applied to the injected error.
    clip:           truncate the propagating backward signal at the plant's
                    intensity limits (uses the plant nonlinearity's clip range).
    """

    normalize_peak: float | None = None
    scale: float = 1.0
    clip: bool = False

    def __post_init__(self):
        if not (0.0 < self.scale <= 1.0):
            raise ConfigurationError(f"scale must be in (0, 1], got {self.scale}")

    @property
    def is_identity(self) -> bool:
        return self.normalize_peak is None and self.scale == 1.0 and not self.clip


@dataclass(frozen=True)
class PhysicalSystem:
    """Four kernels + pointwise nonlinearity (+ optional noise / backward path)."""

    w_sa: Kernel
    w_aa: Kernel
    w_so: Kernel
    w_ao: Kernel
    f: Nonlinearity
    noise: NoiseModel | None = None
    backward_path: BackwardPath | None = None

    def __post_init__(self):
        dts = {self.w_sa.dt, self.w_aa.dt, self.w_so.dt, self.w_ao.dt}
        if len(dts) != 1:
            raise ConfigurationError(f"kernels disagree on dt: {sorted(dts)}")
        n_in, n_state, n_out = self.w_sa.cols, self.w_sa.rows, self.w_so.rows
        if self.w_aa.rows != n_state or self.w_aa.cols != n_state:
            raise DimensionError("w_aa must be square over the state channels")
        if self.w_so.cols != n_in:
            raise DimensionError("w_so cols must match the input channel count")
        if self.w_ao.rows != n_out or self.w_ao.cols != n_state:
            raise DimensionError("w_ao must map state channels to output channels")
        if np.any(self.w_aa.taps[0] != 0.0):
            raise ConfigurationError(
                "w_aa tap 0 must be exactly zero (strictly causal feedback)")

    @property
    def dt(self) -> float:
        return self.w_sa.dt

    @property
    def n_inputs(self) -> int:
        return self.w_sa.cols

    @property
    def n_state(self) -> int:
        return self.w_sa.rows

    @property
    def n_outputs(self) -> int:
        return self.w_so.rows

    def with_kernel(self, name: str, taps: np.ndarray) -> "PhysicalSystem":
        """Copy of the system with one kernel's taps replaced."""
        if name not in ("w_sa", "w_aa", "w_so", "w_ao"):
            raise ConfigurationError(f"unknown kernel {name!r}")
        return replace(self, **{name: Kernel(np.asarray(taps, dtype=np.float64), self.dt)})


@dataclass(frozen=True)
class ForwardTrace:
    """Recorded (measured) state, output, and Jacobian diagonal trace."""

    a: Signal
    o: Signal
    jac: np.ndarray  # (n_state, n_samples), entries in {0, 1}

    def __post_init__(self):
        if not (self.a.n_samples == self.o.n_samples == self.jac.shape[1]):
            raise DimensionError("trace members disagree on n_samples")


@dataclass(frozen=True)
class BackwardTrace:
    """e_a, e_s from the adjoint run, plus the error signal actually injected
    (after any backward-path rescaling) -- kernel gradients contract with it."""

    e_a: Signal
    e_s: Signal
    e_o: Signal


def _causal_feedback(taps: np.ndarray, dt: float, drive: np.ndarray, gate):
    """Solve a[:, i] = gate(drive[:, i] + dt * sum_k taps[k] @ a[:, i-k]) blockwise.

    taps[0] must be zero; blocks of size = first nonzero lag keep the recursion
    explicit while staying vectorized.  gate maps a pre-activation block to the
    emitted block (and may record per-sample bookkeeping via its closure).
    """
    n_state, n = drive.shape
    lags = np.flatnonzero(np.any(taps.reshape(taps.shape[0], -1) != 0.0, axis=1))
    if lags.size and lags[0] == 0:
        raise ConfigurationError("feedback taps must be strictly causal (tap 0 zero)")
    a = np.zeros((n_state, n))
    if n == 0:
        return a
    block = int(lags[0]) if lags.size else n
    pre_fb = np.zeros((n_state, n))
    scalar = n_state == 1 and taps.shape[2] == 1
    w_flat = taps[:, 0, 0] if scalar else None
    for t0 in range(0, n, block):
        t1 = min(t0 + block, n)
        a[:, t0:t1] = gate(drive[:, t0:t1] + pre_fb[:, t0:t1], t0, t1)
        if not lags.size:
            continue
        if scalar:
            contrib = np.convolve(a[0, t0:t1], w_flat)
            hi = min(n, t0 + contrib.size)
            pre_fb[0, t0:hi] += dt * contrib[: hi - t0]
        else:
            blk = a[:, t0:t1]
            for k in lags:
                lo = t0 + int(k)
                if lo >= n:
                    break
                hi = min(n, t1 + int(k))
                pre_fb[:, lo:hi] += dt * (taps[k] @ blk[:, : hi - lo])
    return a


def forward(sys: PhysicalSystem, s: Signal, rng: np.random.Generator | None = None) -> ForwardTrace:
    """Simulate the plant on input s; returns the measured trace.

    rng drives measurement noise and is required only when sys.noise applies
    to the forward direction.
    """
    if s.channels != sys.n_inputs:
        raise DimensionError(
            f"input has {s.channels} channels, system expects {sys.n_inputs}")
    if s.dt != sys.dt:
        raise ConfigurationError(f"dt mismatch: signal {s.dt} vs system {sys.dt}")

    pre_in = convolve(sys.w_sa, s).samples
    n = s.n_samples
    jac = np.zeros((sys.n_state, n))

    def gate(x_blk, t0, t1):
        val, j = apply_nonlinearity(sys.f, x_blk)
        jac[:, t0:t1] = j
        return val

    a = _causal_feedback(sys.w_aa.taps, sys.dt, pre_in, gate)
    a_sig = Signal(a, s.dt)
    o = convolve(sys.w_so, s).samples + convolve(sys.w_ao, a_sig).samples

    if sys.noise is not None and sys.noise.on_forward:
        if rng is None:
            raise ConfigurationError("forward noise configured but no rng given")
        a = a + rng.normal(0.0, sys.noise.std_for(a), a.shape)
        o = o + rng.normal(0.0, sys.noise.std_for(o), o.shape)
        a_sig = Signal(a, s.dt)

    return ForwardTrace(a=a_sig, o=Signal(o, s.dt), jac=jac)


def backward(
    sys: PhysicalSystem,
    trace: ForwardTrace,
    e_o: Signal,
    rng: np.random.Generator | None = None,
    transpose_kernels: bool = True,
) -> BackwardTrace:
    """Adjoint pass: inject e_o time-reversed through the reciprocal medium.

    e_o is the gradient density of the cost w.r.t. o (dC/do[i] = dt * e_o[i]);
    e_a and e_s come back with the same convention.  The Jacobian gate uses the
    recorded trace, not a re-evaluation of f.  transpose_kernels=False is a
    debugging switch that skips the tap transposition (negative control for
    gradient checks) and is never correct for real use.
    """
    if e_o.channels != sys.n_outputs:
        raise DimensionError(
            f"e_o has {e_o.channels} channels, system outputs {sys.n_outputs}")
    n = trace.jac.shape[1]
    if e_o.n_samples != n:
        raise DimensionError(
            f"e_o length {e_o.n_samples} != forward length {n}")
    if e_o.dt != sys.dt:
        raise ConfigurationError(f"dt mismatch: e_o {e_o.dt} vs system {sys.dt}")

    bp = sys.backward_path or BackwardPath()
    e_o_arr = e_o.samples
    if bp.normalize_peak is not None:
        peak = float(np.max(np.abs(e_o_arr))) if e_o_arr.size else 0.0
        if peak > 0.0:
            e_o_arr = e_o_arr * (bp.normalize_peak / peak)
    if bp.scale != 1.0:
        e_o_arr = e_o_arr * bp.scale
    e_o_used = Signal(e_o_arr, e_o.dt)

    def maybe_t(taps):
        return taps.transpose(0, 2, 1) if transpose_kernels else taps

    def adj(kernel: Kernel, sig: Signal) -> Signal:
        if transpose_kernels or kernel.rows != kernel.cols:
            # the corruption is only expressible where shapes permit (square)
            return adjoint_convolve(kernel, sig)
        # corrupted variant: contraction without the tap transpose
        return adjoint_convolve(Kernel(kernel.taps.transpose(0, 2, 1), kernel.dt), sig)

    contrib_o = adj(sys.w_ao, e_o_used).samples

    # anti-causal recursion == causal recursion on time-reversed traces with
    # transposed taps; reuse the blocked forward engine
    jac_rev = trace.jac[:, ::-1]
    clip_f = sys.f if (bp.clip and sys.f.kind == "clip") else None

    def gate(x_blk, t0, t1):
        if clip_f is not None:
            x_blk = np.clip(x_blk, clip_f.lo, clip_f.hi)
        return jac_rev[:, t0:t1] * x_blk

    e_a_rev = _causal_feedback(maybe_t(sys.w_aa.taps), sys.dt, contrib_o[:, ::-1], gate)
    e_a_arr = e_a_rev[:, ::-1]
    e_s_arr = adj(sys.w_sa, Signal(e_a_arr, e_o.dt)).samples + adj(sys.w_so, e_o_used).samples

    if sys.noise is not None and sys.noise.on_backward:
        if rng is None:
            raise ConfigurationError("backward noise configured but no rng given")
        e_a_arr = e_a_arr + rng.normal(0.0, sys.noise.std_for(e_a_arr), e_a_arr.shape)
        e_s_arr = e_s_arr + rng.normal(0.0, sys.noise.std_for(e_s_arr), e_s_arr.shape)

    return BackwardTrace(e_a=Signal(e_a_arr, e_o.dt), e_s=Signal(e_s_arr, e_o.dt),
                         e_o=e_o_used)
