"""Discrete-time multichannel signals and the convolution pair they ride on.

A Signal holds channels x samples at a fixed sample period dt.  A Kernel is a
matrix-valued finite impulse response W[k], k = 0..L-1, the discretization of
a continuous impulse-response matrix W(t) sampled at multiples of dt.

Convolutions carry an explicit dt weight,

    y[i] = dt * sum_k W[k] @ x[i-k]        (x[j] = 0 for j < 0)

so continuous-time formulas carry over verbatim; the adjoint operator is the
time-reversed, transposed-tap contraction

    r[i] = dt * sum_k W[k].T @ e[i+k]      (e[j] = 0 for j >= n)

and the pair satisfies <conv(W,x), y> == <x, adj(W,y)> exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, LengthError, NumericError


def _as_readonly_f64(arr, ndim, name):
    out = np.array(arr, dtype=np.float64, order="C")
    if out.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise NumericError(f"{name} contains non-finite values")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Signal:
    """Multichannel trace: samples has shape (channels, n_samples)."""

    samples: np.ndarray
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_readonly_f64(self.samples, 2, "samples"))
        if self.samples.shape[0] < 1:
            raise DimensionError("a Signal needs at least one channel")
        if not (float(self.dt) > 0.0):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples * self.dt

    @staticmethod
    def from_rows(rows, dt: float) -> "Signal":
        """Build from anything 2-D-like (channels x samples)."""
        return Signal(np.atleast_2d(np.asarray(rows, dtype=np.float64)), dt)

    @staticmethod
    def zeros(channels: int, n_samples: int, dt: float) -> "Signal":
        return Signal(np.zeros((channels, n_samples)), dt)


@dataclass(frozen=True)
class Kernel:
    """Finite impulse response: taps has shape (L, rows, cols)."""

    taps: np.ndarray
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "taps", _as_readonly_f64(self.taps, 3, "taps"))
        if self.taps.shape[0] < 1:
            raise DimensionError("a Kernel needs at least one tap")
        if not (float(self.dt) > 0.0):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def length(self) -> int:
        return self.taps.shape[0]

    @property
    def rows(self) -> int:
        return self.taps.shape[1]

    @property
    def cols(self) -> int:
        return self.taps.shape[2]

    def nonzero_lags(self) -> np.ndarray:
        """Indices k with W[k] != 0; empty for an all-zero kernel."""
        return np.flatnonzero(np.any(self.taps != 0.0, axis=(1, 2)))

    def first_nonzero_lag(self):
        """Smallest k with W[k] != 0, or None for an all-zero kernel."""
        lags = self.nonzero_lags()
        return int(lags[0]) if lags.size else None

    @staticmethod
    def from_taps(taps, dt: float) -> "Kernel":
        taps = np.asarray(taps, dtype=np.float64)
        if taps.ndim == 1:  # scalar kernel given as a flat tap list
            taps = taps[:, None, None]
        return Kernel(taps, dt)

    @staticmethod
    def delta(gain_matrix, dt: float, lag: int = 0, length: int | None = None) -> "Kernel":
        """Discrete delta kernel: single tap gain_matrix/dt at the given lag."""
        g = np.atleast_2d(np.asarray(gain_matrix, dtype=np.float64))
        L = (lag + 1) if length is None else length
        if lag >= L:
            raise ConfigurationError(f"lag {lag} does not fit in {L} taps")
        taps = np.zeros((L, g.shape[0], g.shape[1]))
        taps[lag] = g / dt
        return Kernel(taps, dt)

    @staticmethod
    def zero(rows: int, cols: int, dt: float, length: int = 1) -> "Kernel":
        return Kernel(np.zeros((length, rows, cols)), dt)


def _check_pair(kernel: Kernel, x: Signal, expect_cols: bool):
    want = kernel.cols if expect_cols else kernel.rows
    side = "cols" if expect_cols else "rows"
    if x.channels != want:
        raise DimensionError(
            f"kernel {side} ({want}) must match signal channels ({x.channels})")
    if kernel.dt != x.dt:
        raise ConfigurationError(f"dt mismatch: kernel {kernel.dt} vs signal {x.dt}")


def convolve(kernel: Kernel, x: Signal) -> Signal:
    """Causal discrete convolution y[i] = dt * sum_k W[k] @ x[i-k]."""
    _check_pair(kernel, x, expect_cols=True)
    n = x.n_samples
    y = np.zeros((kernel.rows, n))
    if n:
        if kernel.rows == 1 and kernel.cols == 1:
            # scalar fast path; np.convolve is the same direct time-domain sum
            full = np.convolve(x.samples[0], kernel.taps[:, 0, 0])
            y[0] = full[:n]
        else:
            xs = x.samples
            for k in kernel.nonzero_lags():
                if k >= n:
                    break
                y[:, k:] += kernel.taps[k] @ xs[:, : n - k]
    return Signal(y * kernel.dt, x.dt)


def adjoint_convolve(kernel: Kernel, e: Signal) -> Signal:
    """Adjoint of convolve: r[i] = dt * sum_k W[k].T @ e[i+k]."""
    _check_pair(kernel, e, expect_cols=False)
    n = e.n_samples
    r = np.zeros((kernel.cols, n))
    if n:
        if kernel.rows == 1 and kernel.cols == 1:
            w = kernel.taps[:, 0, 0]
            L = kernel.length
            full = np.convolve(e.samples[0], w[::-1])
            r[0] = full[L - 1 : L - 1 + n]
        else:
            es = e.samples
            for k in kernel.nonzero_lags():
                if k >= n:
                    break
                r[:, : n - k] += kernel.taps[k].T @ es[:, k:]
    return Signal(r * kernel.dt, e.dt)


def time_reverse(x: Signal) -> Signal:
    """Reverse the sample order (involution)."""
    return Signal(x.samples[:, ::-1], x.dt)


def split_segments(x: Signal, period_samples: int) -> list[Signal]:
    """Cut into contiguous non-overlapping segments of period_samples each."""
    if period_samples < 1:
        raise LengthError(f"period must be positive, got {period_samples}")
    n = x.n_samples
    if n % period_samples:
        raise LengthError(
            f"n_samples ({n}) not divisible by period ({period_samples})")
    return [
        Signal(x.samples[:, i : i + period_samples], x.dt)
        for i in range(0, n, period_samples)
    ]


def concat_segments(segments) -> Signal:
    """Inverse of split_segments."""
    segments = list(segments)
    if not segments:
        raise LengthError("cannot concatenate zero segments")
    dt = segments[0].dt
    ch = segments[0].channels
    for s in segments[1:]:
        if s.dt != dt or s.channels != ch:
            raise DimensionError("segments disagree in dt or channel count")
    return Signal(np.concatenate([s.samples for s in segments], axis=1), dt)


def inner(x: Signal, y: Signal) -> float:
    """Plain sample inner product sum_i x[i].y[i]."""
    if x.samples.shape != y.samples.shape:
        raise DimensionError(f"shape mismatch {x.samples.shape} vs {y.samples.shape}")
    return float(np.vdot(x.samples, y.samples))


def signal_to_csv(x: Signal, path) -> None:
    """Write one row per sample: t,ch0,ch1,...  (t in seconds at dt resolution)."""
    with open(path, "w") as fh:
        fh.write("t," + ",".join(f"ch{c}" for c in range(x.channels)) + "\n")
        for i in range(x.n_samples):
            row = ",".join(repr(float(v)) for v in x.samples[:, i])
            fh.write(f"{i * x.dt!r},{row}\n")


def kernel_to_csv(kernel: Kernel, path) -> None:
    """One row per tap: lag, then rows*cols columns w_<r>_<c> (for spectrum
    plots and inspection; not a round-trip format)."""
    with open(path, "w") as fh:
        header = ["lag"] + [f"w_{r}_{c}" for r in range(kernel.rows)
                            for c in range(kernel.cols)]
        fh.write(",".join(header) + "\n")
        for k in range(kernel.length):
            vals = [str(k)] + [repr(float(v)) for v in kernel.taps[k].ravel()]
            fh.write(",".join(vals) + "\n")


def signal_from_csv(path, dt: float | None = None) -> Signal:
    """Read the format written by signal_to_csv; dt inferred from t unless given."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "t":
            raise ConfigurationError(f"{path}: expected header starting with 't'")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    ts = np.array([float(r[0]) for r in rows])
    data = np.array([[float(v) for v in r[1:]] for r in rows]).T
    if dt is None:
        if len(ts) < 2:
            raise ConfigurationError(f"{path}: cannot infer dt from {len(ts)} samples")
        dt = float(ts[1] - ts[0])
    if data.size == 0:
        data = np.zeros((len(header) - 1, 0))
    return Signal(data, dt)
