"""Time multiplexing: feeding a discrete series to a continuous medium.

Each instance x_i becomes a P-sample segment s_b + M(t) x_i; output segments
decode through U(t).  One physical channel thus emulates many virtual input
dimensions.  The same codec carries errors backwards: segments U(t)' e_i.
"""

import numpy as np

from echotrain import (
    MaskSet,
    decode_outputs,
    encode_inputs,
    encode_output_errors,
    split_segments,
)

rng = np.random.default_rng(2)
P = 8
masks = MaskSet(
    m=rng.standard_normal((1, 3, P)),   # 3 virtual inputs -> 1 physical channel
    u=rng.standard_normal((2, 1, P)),   # 1 physical output -> 2 virtual outputs
    s_b=np.zeros((1, P)),
    y_b=np.zeros(2),
    period=P,
    dt=1.0,
)

xs = rng.standard_normal((4, 3))
s = encode_inputs(xs, masks)
print(f"4 instances of dim 3 -> one {s.channels}-channel signal of "
      f"{s.n_samples} samples")

segments = split_segments(s, P)
print("segment 2 equals its own encoding:",
      np.allclose(segments[2].samples, encode_inputs(xs[2:3], masks).samples))

# decode a synthetic output signal and verify the codec adjoint relation
o = type(s)(rng.standard_normal((1, 4 * P)), 1.0)
ys = decode_outputs(o, masks)
errs = rng.standard_normal((4, 2))
e_o = encode_output_errors(errs, masks)
lhs = 1.0 * float(np.vdot(e_o.samples, o.samples))
rhs = float(np.sum(errs * (ys - masks.y_b)))
print(f"codec adjoint identity: {lhs:+.6f} == {rhs:+.6f} "
      f"(diff {abs(lhs - rhs):.2e})")
