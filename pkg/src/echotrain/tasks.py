"""Benchmark sequence generators and metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, UndefinedMetricError


@dataclass(frozen=True)
class SequenceDataset:
    """inputs (n, dim_x), targets (n, dim_y), cost_mask (n,) validity flags."""

    inputs: np.ndarray
    targets: np.ndarray
    cost_mask: np.ndarray

    def __post_init__(self):
        inp = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        tgt = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        msk = np.asarray(self.cost_mask, dtype=bool)
        if not (len(inp) == len(tgt) == len(msk)):
            raise DimensionError("inputs, targets and cost_mask must share length")
        if not (np.all(np.isfinite(inp)) and np.all(np.isfinite(tgt))):
            raise ConfigurationError("dataset has non-finite values")
        object.__setattr__(self, "inputs", inp)
        object.__setattr__(self, "targets", tgt)
        object.__setattr__(self, "cost_mask", msk)

    def __len__(self) -> int:
        return len(self.inputs)

    def to_csv(self, path) -> None:
        dx, dy = self.inputs.shape[1], self.targets.shape[1]
        with open(path, "w") as fh:
            fh.write(",".join([f"x{i}" for i in range(dx)]
                              + [f"y{i}" for i in range(dy)] + ["mask"]) + "\n")
            for i in range(len(self)):
                vals = [repr(float(v)) for v in self.inputs[i]]
                vals += [repr(float(v)) for v in self.targets[i]]
                vals.append(str(int(self.cost_mask[i])))
                fh.write(",".join(vals) + "\n")

    @staticmethod
    def from_csv(path) -> "SequenceDataset":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            dx = sum(1 for h in header if h.startswith("x"))
            dy = sum(1 for h in header if h.startswith("y"))
            rows = [line.strip().split(",") for line in fh if line.strip()]
        inp = np.array([[float(v) for v in r[:dx]] for r in rows])
        tgt = np.array([[float(v) for v in r[dx : dx + dy]] for r in rows])
        msk = np.array([bool(int(r[-1])) for r in rows])
        return SequenceDataset(inp, tgt, msk)


def gen_variable_delay(n: int, rng: np.random.Generator,
                       one_hot: bool = False) -> SequenceDataset:
    """Scalar q_i i.i.d. from {0,1,2}; target y_i = q_{i - q_i}.

    The delay depends on the current input, so no linear filter solves it.
    The first two instances are excluded from the cost (lookback undefined).
    one_hot encodes q as a 3-dim indicator instead of the raw scalar.
    """
    if n < 3:
        raise ConfigurationError(f"need n >= 3, got {n}")
    q = rng.integers(0, 3, size=n)
    y = np.zeros(n)
    mask = np.zeros(n, dtype=bool)
    for i in range(n):
        j = i - q[i]
        if i >= 2:
            y[i] = q[j]
            mask[i] = True
    inputs = np.eye(3)[q] if one_hot else q.astype(np.float64)[:, None]
    return SequenceDataset(inputs, y[:, None], mask)


@dataclass(frozen=True)
class LabelProcessParams:
    """Smooth AR(1) trajectories; the label quantizes a short moving window,
    so correct labeling needs memory of past frames."""

    n_classes: int = 4
    input_dim: int = 8
    window: int = 3
    ar_coeff: float = 0.8


def gen_synthetic_labels(n: int, n_classes: int, input_dim: int,
                         rng: np.random.Generator, window: int = 3,
                         ar_coeff: float = 0.8) -> SequenceDataset:
    """Frame-labeling stand-in task with one-hot targets.

    Inputs follow a stationary AR(1) process per channel,
    u_i = ar * u_{i-1} + sqrt(1 - ar^2) * xi_i (unit marginal variance).
    The label of frame i quantizes the mean of channel 0 over the last
    `window` frames at the exact Gaussian quantiles for that window mean, so
    classes are equiprobable by construction.  Frames with incomplete windows
    are masked out.
    """
    if n_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {n_classes}")
    if window < 1 or n < window:
        raise ConfigurationError("window must satisfy 1 <= window <= n")
    from scipy.stats import norm

    ar = float(ar_coeff)
    u = np.zeros((n, input_dim))
    u[0] = rng.standard_normal(input_dim)
    innov = np.sqrt(1.0 - ar * ar)
    for i in range(1, n):
        u[i] = ar * u[i - 1] + innov * rng.standard_normal(input_dim)

    # window-mean variance of the stationary AR(1) channel
    w = window
    var = (w + 2.0 * sum((w - L) * ar ** L for L in range(1, w))) / (w * w)
    thresholds = norm.ppf(np.arange(1, n_classes) / n_classes) * np.sqrt(var)

    targets = np.zeros((n, n_classes))
    mask = np.zeros(n, dtype=bool)
    for i in range(n):
        if i >= w - 1:
            g = float(np.mean(u[i - w + 1 : i + 1, 0]))
            label = int(np.searchsorted(thresholds, g))
            targets[i, label] = 1.0
            mask[i] = True
    return SequenceDataset(u, targets, mask)


def nrmse(pred, target, mask=None) -> float:
    """sqrt(mean((pred - target)^2)) / std(target) over masked instances."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise DimensionError("pred and target must have the same length")
    if mask is None:
        mask = np.ones(len(pred), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.sum() < 2:
        raise UndefinedMetricError("need at least two masked instances")
    p, t = pred[mask], target[mask]
    std = float(np.std(t))
    if std == 0.0:
        raise UndefinedMetricError("target variance is zero; NRMSE undefined")
    return float(np.sqrt(np.mean((p - t) ** 2)) / std)


def frame_error_rate(pred_labels, true_labels, mask=None) -> float:
    """Fraction of masked frames with a wrong label."""
    pred = np.asarray(pred_labels).ravel()
    true = np.asarray(true_labels).ravel()
    if pred.shape != true.shape:
        raise DimensionError("label sequences must have the same length")
    if mask is None:
        mask = np.ones(len(pred), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise UndefinedMetricError("empty mask; frame error rate undefined")
    return float(np.mean(pred[mask] != true[mask]))
