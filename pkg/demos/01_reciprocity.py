"""The reciprocity that makes physical backpropagation possible.

A linear medium maps sources to receivers through a matrix-valued impulse
response W(t).  Run the same medium backwards (receivers as sources) and the
transfer is the transposed kernel -- in discrete time, the adjoint identity

    <conv(W, x), y> == <x, adj(W, y)>

holds exactly.  This script builds random kernels and checks it, then shows
that the adjoint is literally "time-reverse, convolve with transposed taps,
time-reverse again", i.e. playing the signal backwards through the medium.
"""

import numpy as np

from echotrain import Kernel, Signal, adjoint_convolve, convolve, inner, time_reverse

rng = np.random.default_rng(0)

print("adjoint identity on random kernel/signal pairs")
for trial in range(5):
    rows, cols, L, n = 3, 2, 6, 40
    k = Kernel(rng.standard_normal((L, rows, cols)), dt=0.1)
    x = Signal(rng.standard_normal((cols, n)), dt=0.1)
    y = Signal(rng.standard_normal((rows, n)), dt=0.1)
    lhs = inner(convolve(k, x), y)
    rhs = inner(x, adjoint_convolve(k, y))
    print(f"  trial {trial}: <Wx,y> = {lhs:+.6f}   <x,W'y> = {rhs:+.6f}   "
          f"diff = {abs(lhs - rhs):.2e}")

print("\nadjoint == play it backwards through the transposed medium")
k = Kernel(rng.standard_normal((5, 2, 2)), dt=0.1)
e = Signal(rng.standard_normal((2, 30)), dt=0.1)
direct = adjoint_convolve(k, e)
kt = Kernel(k.taps.transpose(0, 2, 1), k.dt)
reversed_path = time_reverse(convolve(kt, time_reverse(e)))
print(f"  max |direct - reversed-playback| = "
      f"{np.max(np.abs(direct.samples - reversed_path.samples)):.2e}")

print("\na pure delay advances under the adjoint (anti-causal response)")
delay = Kernel.delta(np.eye(1), dt=1.0, lag=3)
pulse = Signal(np.eye(1, 10, 5), dt=1.0)  # impulse at t = 5
print("  forward :", convolve(delay, pulse).samples[0].astype(int))
print("  adjoint :", adjoint_convolve(delay, pulse).samples[0].astype(int))
