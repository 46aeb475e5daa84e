"""Plain-text, full-precision serialization of plants and mask sets.

Line-oriented format, space-separated tokens, floats as C99 hex literals
(lossless round trip).  Layout:

    format echotrain-system 1
    dt <hex>
    nonlinearity rectifier | identity | clip <lo> <hi>
    noise <snr_db> <on_forward:0|1> <on_backward:0|1>          (optional)
    backward_path <peak|none> <scale> <clip:0|1>               (optional)
    kernel <name> <rows> <cols> <taps>
    <one line per tap: rows*cols hex floats, row-major>
    ...
    maskset <dim_x> <dim_y> <period>                           (optional)
    m / u: one line per mask sample, row-major; s_b per sample; y_b one line
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .masking import MaskSet
from .signal import Kernel
from .system import BackwardPath, NoiseModel, Nonlinearity, PhysicalSystem

_FORMAT_LINE = "format echotrain-system 1"


def _hex(v: float) -> str:
    return float(v).hex()


def _hexrow(values) -> str:
    return " ".join(_hex(v) for v in np.asarray(values, dtype=np.float64).ravel())


def _parse_row(tokens) -> np.ndarray:
    return np.array([float.fromhex(t) for t in tokens])


def save_system(path, system: PhysicalSystem, masks: MaskSet | None = None) -> None:
    lines = [_FORMAT_LINE, f"dt {_hex(system.dt)}"]
    f = system.f
    if f.kind == "clip":
        lines.append(f"nonlinearity clip {_hex(f.lo)} {_hex(f.hi)}")
    else:
        lines.append(f"nonlinearity {f.kind}")
    if system.noise is not None:
        nz = system.noise
        lines.append(f"noise {_hex(nz.snr_db)} {int(nz.on_forward)} {int(nz.on_backward)}")
    if system.backward_path is not None:
        bp = system.backward_path
        peak = "none" if bp.normalize_peak is None else _hex(bp.normalize_peak)
        lines.append(f"backward_path {peak} {_hex(bp.scale)} {int(bp.clip)}")
    for name in ("w_sa", "w_aa", "w_so", "w_ao"):
        k: Kernel = getattr(system, name)
        lines.append(f"kernel {name} {k.rows} {k.cols} {k.length}")
        for tap in k.taps:
            lines.append(_hexrow(tap))
    if masks is not None:
        if masks.dt != system.dt:
            raise ConfigurationError("mask dt must match the system dt")
        lines.append(f"maskset {masks.dim_x} {masks.dim_y} {masks.period}")
        lines.append(f"mask_channels {masks.n_in} {masks.n_out}")
        for t in range(masks.period):
            lines.append("m " + _hexrow(masks.m[:, :, t]))
        for t in range(masks.period):
            lines.append("sb " + _hexrow(masks.s_b[:, t]))
        for t in range(masks.period):
            lines.append("u " + _hexrow(masks.u[:, :, t]))
        lines.append("yb " + _hexrow(masks.y_b))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_system(path):
    """Returns (PhysicalSystem, MaskSet | None)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != _FORMAT_LINE:
        raise ConfigurationError(f"{path}: not an echotrain system file")
    i = 1
    dt = None
    f = None
    noise = None
    backward_path = None
    kernels = {}
    masks = None
    while i < len(lines):
        tok = lines[i].split()
        key = tok[0]
        if key == "dt":
            dt = float.fromhex(tok[1])
            i += 1
        elif key == "nonlinearity":
            if tok[1] == "clip":
                f = Nonlinearity.clip(float.fromhex(tok[2]), float.fromhex(tok[3]))
            else:
                f = Nonlinearity(tok[1])
            i += 1
        elif key == "noise":
            noise = NoiseModel(float.fromhex(tok[1]), bool(int(tok[2])), bool(int(tok[3])))
            i += 1
        elif key == "backward_path":
            peak = None if tok[1] == "none" else float.fromhex(tok[1])
            backward_path = BackwardPath(peak, float.fromhex(tok[2]), bool(int(tok[3])))
            i += 1
        elif key == "kernel":
            name, rows, cols, L = tok[1], int(tok[2]), int(tok[3]), int(tok[4])
            taps = np.empty((L, rows, cols))
            for k in range(L):
                taps[k] = _parse_row(lines[i + 1 + k].split()).reshape(rows, cols)
            kernels[name] = Kernel(taps, dt)
            i += 1 + L
        elif key == "maskset":
            dim_x, dim_y, period = int(tok[1]), int(tok[2]), int(tok[3])
            ctok = lines[i + 1].split()
            if ctok[0] != "mask_channels":
                raise ConfigurationError(f"{path}: malformed maskset block")
            n_in, n_out = int(ctok[1]), int(ctok[2])
            base = i + 2
            m = np.empty((n_in, dim_x, period))
            s_b = np.empty((n_in, period))
            u = np.empty((dim_y, n_out, period))
            for t in range(period):
                m[:, :, t] = _parse_row(lines[base + t].split()[1:]).reshape(n_in, dim_x)
            for t in range(period):
                s_b[:, t] = _parse_row(lines[base + period + t].split()[1:])
            for t in range(period):
                u[:, :, t] = _parse_row(lines[base + 2 * period + t].split()[1:]).reshape(dim_y, n_out)
            y_b = _parse_row(lines[base + 3 * period].split()[1:])
            masks = MaskSet(m=m, u=u, s_b=s_b, y_b=y_b, period=period, dt=dt)
            i = base + 3 * period + 1
        else:
            raise ConfigurationError(f"{path}: unknown record {key!r}")
    missing = {"w_sa", "w_aa", "w_so", "w_ao"} - set(kernels)
    if dt is None or f is None or missing:
        raise ConfigurationError(f"{path}: incomplete system (missing {sorted(missing)})")
    system = PhysicalSystem(kernels["w_sa"], kernels["w_aa"], kernels["w_so"],
                            kernels["w_ao"], f, noise=noise, backward_path=backward_path)
    return system, masks
