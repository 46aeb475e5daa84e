import numpy as np
import pytest

from echotrain.errors import NumericError
from echotrain.gradients import (
    ALL_BLOCKS,
    GradCheckConfig,
    GradCheckReport,
    finite_difference_gradient,
    grad_check,
    kernel_gradients,
    pipeline_cost,
    pipeline_gradients,
    random_toy_pipeline,
    relative_error,
)
from echotrain.signal import Kernel, Signal
from echotrain.system import Nonlinearity, PhysicalSystem, backward, forward

from oracles import fd_gradient, rel_err


def test_zero_error_gives_zero_kernel_gradients():
    rng = np.random.default_rng(0)
    dt = 0.2
    aa = 0.3 * rng.standard_normal((3, 2, 2))
    aa[0] = 0.0
    sys = PhysicalSystem(
        w_sa=Kernel(0.3 * rng.standard_normal((3, 2, 2)), dt),
        w_aa=Kernel(aa, dt),
        w_so=Kernel(0.3 * rng.standard_normal((3, 1, 2)), dt),
        w_ao=Kernel(0.3 * rng.standard_normal((3, 1, 2)), dt),
        f=Nonlinearity.rectifier(),
    )
    s = Signal(rng.standard_normal((2, 20)), dt)
    tr = forward(sys, s)
    bw = backward(sys, tr, Signal.zeros(1, 20, dt))
    g = kernel_gradients(sys, tr, bw, s)
    for name in ("w_sa", "w_aa", "w_so", "w_ao"):
        assert np.all(g.block(name) == 0.0)


def test_single_tap_identity_system_collapse():
    # dt = 1, single-tap w_so, no state path: d_w_so[0] = sum_i e_o[i] s[i]^T
    rng = np.random.default_rng(1)
    dt = 1.0
    sys = PhysicalSystem(
        w_sa=Kernel.zero(1, 2, dt),
        w_aa=Kernel.zero(1, 1, dt),
        w_so=Kernel(rng.standard_normal((1, 2, 2)), dt),
        w_ao=Kernel.zero(2, 1, dt),
        f=Nonlinearity.identity(),
    )
    s = Signal(rng.standard_normal((2, 15)), dt)
    tr = forward(sys, s)
    e_o = Signal(rng.standard_normal((2, 15)), dt)
    bw = backward(sys, tr, e_o)
    g = kernel_gradients(sys, tr, bw, s)
    np.testing.assert_allclose(g.d_w_so[0], e_o.samples @ s.samples.T, rtol=1e-13)


def test_kernel_gradients_match_fd_on_random_system():
    rng = np.random.default_rng(2)
    cfg = GradCheckConfig(n_systems=1, kink_margin=1e-3)
    sys, masks, xs, targets = random_toy_pipeline(cfg, rng)
    bundle = pipeline_gradients(sys, masks, xs, targets)
    for name in ("w_sa", "w_aa", "w_so", "w_ao"):
        kern = getattr(sys, name)
        lag0 = 1 if name == "w_aa" else 0  # tap 0 of w_aa is pinned to zero

        def loss(flat, _n=name, _full=kern.taps, _lag0=lag0):
            taps = _full.copy()
            taps[_lag0:] = flat.reshape(taps[_lag0:].shape)
            return pipeline_cost(sys.with_kernel(_n, taps), masks, xs, targets)

        fd = fd_gradient(loss, kern.taps[lag0:].ravel(), eps=1e-5)
        assert rel_err(bundle.block(name)[lag0:].ravel(), fd) < 1e-5, name


def test_finite_difference_on_quadratic_and_linear():
    theta = np.array([1.0, -2.0, 3.5])
    g = finite_difference_gradient(lambda t: 0.5 * float(t @ t), theta, eps=1e-5)
    np.testing.assert_allclose(g, theta, atol=1e-9)

    c = np.array([2.0, 0.0, -1.0])
    g = finite_difference_gradient(lambda t: float(c @ t), theta, eps=1e-5)
    np.testing.assert_allclose(g, c, atol=1e-10)


def test_finite_difference_threads_match_serial():
    rng = np.random.default_rng(3)
    theta = rng.standard_normal(12)
    A = rng.standard_normal((12, 12))

    def loss(t):
        return float(t @ A @ t)

    serial = finite_difference_gradient(loss, theta)
    parallel = finite_difference_gradient(loss, theta, threads=4)
    np.testing.assert_array_equal(serial, parallel)


def test_finite_difference_nonfinite_loss_raises():
    with pytest.raises(NumericError):
        finite_difference_gradient(lambda t: float("nan"), np.zeros(2))


def test_grad_check_identity_nonlinearity_very_tight():
    cfg = GradCheckConfig(n_systems=2, nonlinearities=("identity",))
    report = grad_check(cfg, seed=42)
    assert report.passed
    assert max(err for _, err, _ in report.entries) < 1e-8


def test_grad_check_rectifier_passes():
    cfg = GradCheckConfig(n_systems=3, nonlinearities=("rectifier",))
    report = grad_check(cfg, seed=7)
    assert report.passed
    assert max(err for _, err, _ in report.entries) < 1e-5


def test_grad_check_broken_adjoint_fails():
    cfg = GradCheckConfig(n_systems=2)
    report = grad_check(cfg, seed=11, break_adjoint=True)
    assert not report.passed


def test_report_csv_roundtrip(tmp_path):
    cfg = GradCheckConfig(n_systems=1, nonlinearities=("identity",))
    report = grad_check(cfg, seed=3)
    path = tmp_path / "report.csv"
    report.to_csv(path)
    back = GradCheckReport.from_csv(path)
    assert back.entries == report.entries
    assert set(b for b, _, _ in back.entries) == set(ALL_BLOCKS)


def test_batch_gradient_linearity():
    # gradient of a summed cost == sum of per-instance-cost gradients
    rng = np.random.default_rng(4)
    cfg = GradCheckConfig(n_systems=1, instances=4, nonlinearities=("identity",))
    sys, masks, xs, targets = random_toy_pipeline(cfg, rng)
    # batch encoded jointly vs instances encoded alone: feedback spans segment
    # boundaries, so compare through per-instance error masking instead
    full = pipeline_gradients(sys, masks, xs, targets)
    acc = None
    s = None
    from echotrain.masking import (decode_outputs, encode_inputs,
                                   encode_output_errors, input_mask_gradient,
                                   output_mask_gradient)

    s = encode_inputs(xs, masks)
    tr = forward(sys, s)
    ys = decode_outputs(tr.o, masks)
    for i in range(len(xs)):
        errs = np.zeros_like(ys)
        errs[i] = ys[i] - targets[i]
        e_o = encode_output_errors(errs, masks)
        bw = backward(sys, tr, e_o)
        g = kernel_gradients(sys, tr, bw, s)
        g.d_m, g.d_s_b = input_mask_gradient(bw.e_s, xs)
        g.d_u, g.d_y_b = output_mask_gradient(errs, tr.o)
        acc = g if acc is None else acc.add_(g)
    for name, arr in full.items():
        assert relative_error(arr, acc.block(name)) < 1e-12, name
