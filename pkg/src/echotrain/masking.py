"""Time-multiplexing codec between discrete sequences and continuous signals.

Each instance x_i of a discrete series becomes a P-sample segment

    s_i[t] = s_b[:, t] + m[:, :, t] @ x_i          t = 0..P-1

and output segments decode through the dt-weighted sum

    y_i = y_b + dt * sum_t u[:, :, t] @ o_i[:, t].

Output errors e_i = dC/dy_i re-enter the plant as e_o segments u[:, :, t].T @ e_i
(gradient density; the dt sample weight from the decode sum is what makes
dC/do[sample] = dt * e_o[sample]).  Mask gradients below are the exact
gradients of the end-to-end discrete cost, finite-difference validated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DimensionError, LengthError, NumericError
from .signal import Signal


@dataclass(frozen=True)
class MaskSet:
    """Input mask m (N, dim_x, P), output mask u (dim_y, M, P), bias trace
    s_b (N, P), bias vector y_b (dim_y), masking period P, sample period dt."""

    m: np.ndarray
    u: np.ndarray
    s_b: np.ndarray
    y_b: np.ndarray
    period: int
    dt: float

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        u = np.asarray(self.u, dtype=np.float64)
        s_b = np.asarray(self.s_b, dtype=np.float64)
        y_b = np.asarray(self.y_b, dtype=np.float64)
        P = int(self.period)
        if P < 1:
            raise ConfigurationError(f"period must be positive, got {self.period}")
        if m.ndim != 3 or u.ndim != 3 or s_b.ndim != 2 or y_b.ndim != 1:
            raise DimensionError("mask arrays have wrong rank")
        if not (m.shape[2] == u.shape[2] == s_b.shape[1] == P):
            raise ConfigurationError("all mask members must share the period P")
        if m.shape[0] != s_b.shape[0]:
            raise DimensionError("m and s_b disagree on input channel count")
        if u.shape[0] != y_b.shape[0]:
            raise DimensionError("u and y_b disagree on output dimension")
        for name, arr in (("m", m), ("u", u), ("s_b", s_b), ("y_b", y_b)):
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"mask member {name} has non-finite values")
            arr.flags.writeable = False
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "s_b", s_b)
        object.__setattr__(self, "y_b", y_b)
        object.__setattr__(self, "period", P)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_in(self) -> int:
        return self.m.shape[0]

    @property
    def dim_x(self) -> int:
        return self.m.shape[1]

    @property
    def n_out(self) -> int:
        return self.u.shape[1]

    @property
    def dim_y(self) -> int:
        return self.u.shape[0]

    def replace(self, **kw) -> "MaskSet":
        return replace(self, **kw)


def init_masks(n_in: int, dim_x: int, n_out: int, dim_y: int, period: int, dt: float,
               std_m: float, std_u: float, rng: np.random.Generator) -> MaskSet:
    """Fresh masks: i.i.d. zero-mean Gaussian m and u, zero bias trace/vector."""
    return MaskSet(
        m=std_m * rng.standard_normal((n_in, dim_x, period)),
        u=std_u * rng.standard_normal((dim_y, n_out, period)),
        s_b=np.zeros((n_in, period)),
        y_b=np.zeros(dim_y),
        period=period,
        dt=dt,
    )


def _as_instances(xs, dim, name):
    arr = np.asarray(xs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionError(f"{name} must be (n, {dim}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} has non-finite values")
    return arr


def encode_inputs(xs, masks: MaskSet) -> Signal:
    """Concatenate segments s_b + m @ x_i; one period per instance."""
    xs = _as_instances(xs, masks.dim_x, "xs")
    # (n, N, P) = instances x channels x segment clock
    segs = np.einsum("rcp,ic->irp", masks.m, xs) + masks.s_b[None, :, :]
    n, N, P = segs.shape
    return Signal(segs.transpose(1, 0, 2).reshape(N, n * P), masks.dt)


def decode_outputs(o: Signal, masks: MaskSet) -> np.ndarray:
    """y_i = y_b + dt * sum_t u[:, :, t] @ o_i[:, t]; returns (n, dim_y)."""
    if o.channels != masks.n_out:
        raise DimensionError(
            f"output signal has {o.channels} channels, masks expect {masks.n_out}")
    P = masks.period
    if o.n_samples % P:
        raise LengthError(f"signal length {o.n_samples} not divisible by period {P}")
    n = o.n_samples // P
    segs = o.samples.reshape(masks.n_out, n, P).transpose(1, 0, 2)  # (n, M, P)
    ys = o.dt * np.einsum("dcp,icp->id", masks.u, segs)
    return ys + masks.y_b[None, :]


def encode_output_errors(errs, masks: MaskSet) -> Signal:
    """Error segments u[:, :, t].T @ e_i (no bias); mirrors encode_inputs."""
    errs = _as_instances(errs, masks.dim_y, "errs")
    segs = np.einsum("dcp,id->icp", masks.u, errs)  # (n, M, P)
    n, M, P = segs.shape
    return Signal(segs.transpose(1, 0, 2).reshape(M, n * P), masks.dt)


def _segments_of(sig: Signal, count: int, name: str):
    if sig.n_samples != 0 and sig.n_samples % count:
        raise LengthError(
            f"{name} length {sig.n_samples} not divisible into {count} instances")
    P = sig.n_samples // count
    return sig.samples.reshape(sig.channels, count, P).transpose(1, 0, 2), P


def input_mask_gradient(e_s: Signal, xs):
    """Exact cost gradients (dm, ds_b) from the backward input error.

    e_s is a gradient density (dC/ds[sample] = dt * e_s[sample]), so the
    per-sample mask gradient carries one dt factor:
        dm[:, :, t] = dt * sum_i e_s_i[:, t] x_i^T,   ds_b[:, t] = dt * sum_i e_s_i[:, t]
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs[:, None]
    if len(xs) == 0:
        raise LengthError("need at least one instance")
    segs, _ = _segments_of(e_s, len(xs), "e_s")  # (n, N, P)
    dm = e_s.dt * np.einsum("irp,ic->rcp", segs, xs)
    ds_b = e_s.dt * segs.sum(axis=0)
    return dm, ds_b


def output_mask_gradient(errs, o: Signal):
    """Exact cost gradients (du, dy_b) from output errors and the recorded output:
    du[:, :, t] = dt * sum_i e_i o_i[:, t]^T,   dy_b = sum_i e_i."""
    errs = np.asarray(errs, dtype=np.float64)
    if errs.ndim == 1:
        errs = errs[:, None]
    if len(errs) == 0:
        raise LengthError("need at least one instance")
    segs, _ = _segments_of(o, len(errs), "o")  # (n, M, P)
    du = o.dt * np.einsum("id,icp->dcp", errs, segs)
    dy_b = errs.sum(axis=0)
    return du, dy_b


def masks_to_csv(masks: MaskSet, path) -> None:
    """One row per mask sample t; columns m_<r>_<c>, sb_<r>, u_<d>_<c>."""
    cols = ["t"]
    cols += [f"m_{r}_{c}" for r in range(masks.n_in) for c in range(masks.dim_x)]
    cols += [f"sb_{r}" for r in range(masks.n_in)]
    cols += [f"u_{d}_{c}" for d in range(masks.dim_y) for c in range(masks.n_out)]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for t in range(masks.period):
            vals = [str(t)]
            vals += [repr(float(v)) for v in masks.m[:, :, t].ravel()]
            vals += [repr(float(v)) for v in masks.s_b[:, t]]
            vals += [repr(float(v)) for v in masks.u[:, :, t].ravel()]
            fh.write(",".join(vals) + "\n")
