"""Kernel-parameter gradients and the finite-difference oracle that audits
every gradient path in the package.

With error signals as gradient densities (dC/d(sample) = dt * e[sample]) the
exact discrete gradient of a kernel tap picks up dt twice: once as the tap's
weight inside the convolution sum, once converting the density back to a
per-sample gradient,

    dC/dW_xy[k] = dt^2 * sum_{i=0}^{n-1-k} e_dst[:, i+k] src[:, i]^T

with (dst, src) in {(e_a, s), (e_a, a), (e_o, s), (e_o, a)}.  The valid-range
clamp i <= n-1-k mirrors the continuous upper limit T - t.  None of this is
taken on faith: grad_check compares every block against central differences.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericError
from .masking import (
    MaskSet,
    decode_outputs,
    encode_inputs,
    encode_output_errors,
    input_mask_gradient,
    output_mask_gradient,
)
from .signal import Kernel, Signal, convolve
from .system import BackwardTrace, ForwardTrace, Nonlinearity, PhysicalSystem, backward, forward

KERNEL_BLOCKS = ("w_sa", "w_aa", "w_so", "w_ao")
MASK_BLOCKS = ("m", "s_b", "u", "y_b")
ALL_BLOCKS = KERNEL_BLOCKS + MASK_BLOCKS


@dataclass
class GradientBundle:
    """One array per parameter block, shaped like the parameter; None = absent."""

    d_w_sa: np.ndarray | None = None
    d_w_aa: np.ndarray | None = None
    d_w_so: np.ndarray | None = None
    d_w_ao: np.ndarray | None = None
    d_m: np.ndarray | None = None
    d_s_b: np.ndarray | None = None
    d_u: np.ndarray | None = None
    d_y_b: np.ndarray | None = None

    def block(self, name: str) -> np.ndarray | None:
        return getattr(self, "d_" + name)

    def set_block(self, name: str, value) -> None:
        setattr(self, "d_" + name, value)

    def items(self):
        for name in ALL_BLOCKS:
            arr = self.block(name)
            if arr is not None:
                yield name, arr

    def add_(self, other: "GradientBundle") -> "GradientBundle":
        for name in ALL_BLOCKS:
            mine, theirs = self.block(name), other.block(name)
            if (mine is None) != (theirs is None):
                raise DimensionError(f"gradient bundles disagree on block {name}")
            if mine is not None:
                self.set_block(name, mine + theirs)
        return self

    def scale_(self, c: float) -> "GradientBundle":
        for name, arr in self.items():
            self.set_block(name, c * arr)
        return self


def _tap_gradient(e_dst: np.ndarray, src: np.ndarray, L: int, dt: float) -> np.ndarray:
    """G[k] = dt^2 * e_dst[:, k:] @ src[:, :n-k].T for k = 0..L-1."""
    n = src.shape[1]
    out = np.zeros((L, e_dst.shape[0], src.shape[0]))
    for k in range(min(L, n)):
        out[k] = e_dst[:, k:] @ src[:, : n - k].T
    return dt * dt * out


def kernel_gradients(sys: PhysicalSystem, fwd: ForwardTrace, bwd: BackwardTrace,
                     s: Signal, blocks=KERNEL_BLOCKS) -> GradientBundle:
    """Tap gradients from one recorded forward/backward run.

    blocks restricts the computation (a training loop only pays for the
    kernels it actually updates); omitted blocks stay None in the bundle.
    """
    n = s.n_samples
    if not (fwd.a.n_samples == n == bwd.e_a.n_samples == bwd.e_s.n_samples
            == bwd.e_o.n_samples):
        raise DimensionError("forward/backward traces and input disagree on length")
    dt = s.dt
    out = GradientBundle()
    if "w_sa" in blocks:
        out.d_w_sa = _tap_gradient(bwd.e_a.samples, s.samples, sys.w_sa.length, dt)
    if "w_aa" in blocks:
        d = _tap_gradient(bwd.e_a.samples, fwd.a.samples, sys.w_aa.length, dt)
        d[0] = 0.0  # tap 0 is structurally zero (strict causality), not a parameter
        out.d_w_aa = d
    if "w_so" in blocks:
        out.d_w_so = _tap_gradient(bwd.e_o.samples, s.samples, sys.w_so.length, dt)
    if "w_ao" in blocks:
        out.d_w_ao = _tap_gradient(bwd.e_o.samples, fwd.a.samples, sys.w_ao.length, dt)
    return out


def finite_difference_gradient(loss, theta: np.ndarray, eps: float = 1e-5,
                               threads: int = 1) -> np.ndarray:
    """Central differences (loss(theta+eps e_j) - loss(theta-eps e_j)) / 2 eps.

    loss must be deterministic (noise off / fixed seed).  threads > 1 farms the
    independent probes out to a thread pool; the result is identical.
    """
    if not (eps > 0.0):
        raise ConfigurationError(f"eps must be positive, got {eps}")
    theta = np.asarray(theta, dtype=np.float64).ravel()

    def probe(j):
        up, down = theta.copy(), theta.copy()
        up[j] += eps
        down[j] -= eps
        lu, ld = loss(up), loss(down)
        if not (np.isfinite(lu) and np.isfinite(ld)):
            raise NumericError(f"loss non-finite at coordinate {j}")
        return (lu - ld) / (2.0 * eps)

    if threads > 1 and theta.size > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(probe, range(theta.size)))
        return np.array(vals)
    return np.array([probe(j) for j in range(theta.size)])


def relative_error(g1, g2) -> float:
    """|g1 - g2| / max(|g1|, |g2|, 1e-12) over flattened blocks."""
    g1 = np.asarray(g1, dtype=np.float64).ravel()
    g2 = np.asarray(g2, dtype=np.float64).ravel()
    return float(np.linalg.norm(g1 - g2)
                 / max(np.linalg.norm(g1), np.linalg.norm(g2), 1e-12))


# --------------------------------------------------------------------------
# gradient check harness


@dataclass
class GradCheckConfig:
    """Toy pipeline family for the oracle comparison."""

    n_systems: int = 5
    n_in: int = 2
    n_state: int = 3
    n_out: int = 2
    dim_x: int = 2
    dim_y: int = 2
    kernel_len: int = 3
    period: int = 8
    instances: int = 6
    dt_range: tuple = (0.1, 1.2)
    nonlinearities: tuple = ("rectifier", "clip", "identity")
    eps: float = 1e-5
    threshold: float = 1e-4
    kink_margin: float = 1e-3  # resample margin; comfortably above 10*eps
    threads: int = 1


@dataclass
class GradCheckReport:
    entries: list = field(default_factory=list)  # (block, max_rel_err, passed)
    threshold: float = 1e-4

    @property
    def passed(self) -> bool:
        return all(ok for _, _, ok in self.entries)

    def to_text(self) -> str:
        lines = [f"gradient check vs central differences (threshold {self.threshold:g})"]
        for block, err, ok in self.entries:
            lines.append(f"  {block:<6} max_rel_err {err:.3e}  {'pass' if ok else 'FAIL'}")
        lines.append(f"overall: {'pass' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("block,max_rel_err,pass\n")
            for block, err, ok in self.entries:
                fh.write(f"{block},{err!r},{int(ok)}\n")

    @staticmethod
    def from_csv(path) -> "GradCheckReport":
        report = GradCheckReport()
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "block,max_rel_err,pass":
                raise ConfigurationError(f"{path}: unexpected report header {header!r}")
            for line in fh:
                block, err, ok = line.strip().split(",")
                report.entries.append((block, float(err), bool(int(ok))))
        return report


def random_toy_pipeline(cfg: GradCheckConfig, rng: np.random.Generator):
    """One random (system, masks, xs, targets) draw with a kink-safe trace."""
    for _ in range(64):
        dt = float(rng.uniform(*cfg.dt_range))
        kind = cfg.nonlinearities[int(rng.integers(len(cfg.nonlinearities)))]
        f = {"rectifier": Nonlinearity.rectifier(),
             "clip": Nonlinearity.clip(-1.0, 1.0),
             "identity": Nonlinearity.identity()}[kind]

        def taps(rows, cols):
            return 0.4 * rng.standard_normal((cfg.kernel_len, rows, cols))

        aa = taps(cfg.n_state, cfg.n_state)
        aa[0] = 0.0
        sys = PhysicalSystem(
            w_sa=Kernel(taps(cfg.n_state, cfg.n_in), dt),
            w_aa=Kernel(aa, dt),
            w_so=Kernel(taps(cfg.n_out, cfg.n_in), dt),
            w_ao=Kernel(taps(cfg.n_out, cfg.n_state), dt),
            f=f,
        )
        masks = MaskSet(
            m=rng.standard_normal((cfg.n_in, cfg.dim_x, cfg.period)),
            u=rng.standard_normal((cfg.dim_y, cfg.n_out, cfg.period)),
            s_b=0.3 * rng.standard_normal((cfg.n_in, cfg.period)),
            y_b=0.3 * rng.standard_normal(cfg.dim_y),
            period=cfg.period,
            dt=dt,
        )
        xs = rng.standard_normal((cfg.instances, cfg.dim_x))
        targets = rng.standard_normal((cfg.instances, cfg.dim_y))
        if _kink_margin(sys, encode_inputs(xs, masks)) > cfg.kink_margin:
            return sys, masks, xs, targets
    raise ConfigurationError("could not draw a kink-safe toy system; widen margins")


def _kink_margin(sys: PhysicalSystem, s: Signal) -> float:
    """Distance of the closest pre-activation sample to a nonlinearity kink."""
    if sys.f.kind == "identity":
        return np.inf
    tr = forward(sys, s)
    pre = convolve(sys.w_sa, s).samples + convolve(sys.w_aa, tr.a).samples
    if sys.f.kind == "rectifier":
        return float(np.min(np.abs(pre))) if pre.size else np.inf
    return float(min(np.min(np.abs(pre - sys.f.lo)), np.min(np.abs(pre - sys.f.hi))))


def pipeline_cost(sys: PhysicalSystem, masks: MaskSet, xs, targets) -> float:
    """Quadratic end-to-end cost 0.5 sum_i |y_i - t_i|^2 (the grad_check cost)."""
    ys = decode_outputs(forward(sys, encode_inputs(xs, masks)).o, masks)
    return 0.5 * float(np.sum((ys - np.asarray(targets)) ** 2))


def pipeline_gradients(sys: PhysicalSystem, masks: MaskSet, xs, targets,
                       transpose_kernels: bool = True) -> GradientBundle:
    """Physically-backpropagated gradients of pipeline_cost for all 8 blocks."""
    s = encode_inputs(xs, masks)
    tr = forward(sys, s)
    ys = decode_outputs(tr.o, masks)
    errs = ys - np.asarray(targets, dtype=np.float64)
    e_o = encode_output_errors(errs, masks)
    bw = backward(sys, tr, e_o, transpose_kernels=transpose_kernels)
    bundle = kernel_gradients(sys, tr, bw, s)
    bundle.d_m, bundle.d_s_b = input_mask_gradient(bw.e_s, xs)
    bundle.d_u, bundle.d_y_b = output_mask_gradient(errs, tr.o)
    return bundle


def grad_check(cfg: GradCheckConfig, seed: int, break_adjoint: bool = False) -> GradCheckReport:
    """Compare physical gradients to the FD oracle over random toy pipelines.

    break_adjoint skips the kernel transposition in the backward pass -- a
    deliberate corruption that must make the check fail (negative control).
    """
    rng = np.random.default_rng(seed)
    worst = {name: 0.0 for name in ALL_BLOCKS}
    for _ in range(cfg.n_systems):
        sys, masks, xs, targets = random_toy_pipeline(cfg, rng)
        bundle = pipeline_gradients(sys, masks, xs, targets,
                                    transpose_kernels=not break_adjoint)

        for name in KERNEL_BLOCKS:
            kern: Kernel = getattr(sys, name)
            # w_aa tap 0 is pinned to zero by strict causality; FD runs over
            # the free taps only
            lag0 = 1 if name == "w_aa" else 0
            free = kern.taps[lag0:]

            def loss(flat, _name=name, _shape=free.shape, _lag0=lag0,
                     _full=kern.taps):
                taps = _full.copy()
                taps[_lag0:] = flat.reshape(_shape)
                return pipeline_cost(sys.with_kernel(_name, taps), masks, xs, targets)

            fd = finite_difference_gradient(loss, free.ravel(), cfg.eps,
                                            threads=cfg.threads)
            worst[name] = max(worst[name],
                              relative_error(bundle.block(name)[lag0:], fd))

        for name in MASK_BLOCKS:
            ref = getattr(masks, name)

            def loss(flat, _name=name, _shape=ref.shape):
                return pipeline_cost(sys, masks.replace(**{_name: flat.reshape(_shape)}),
                                     xs, targets)

            fd = finite_difference_gradient(loss, ref.ravel(), cfg.eps,
                                            threads=cfg.threads)
            worst[name] = max(worst[name], relative_error(bundle.block(name), fd))

    report = GradCheckReport(threshold=cfg.threshold)
    for name in ALL_BLOCKS:
        report.entries.append((name, worst[name], worst[name] < cfg.threshold))
    return report
