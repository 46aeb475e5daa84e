import numpy as np
import pytest

from echotrain.errors import ConfigurationError, ConstraintError, DimensionError
from echotrain.models import (
    OpticalParams,
    TubeParams,
    add_measurement_noise,
    intensity_bias,
    intensity_recombine,
    intensity_split,
    make_acoustic_system,
    make_optical_system,
    make_tube_kernel,
    random_optical_weights,
)
from echotrain.signal import Signal
from echotrain.system import forward


# ---------------------------------------------------------------- tube kernel

def test_tube_kernel_single_impulse_at_first_arrival():
    p = TubeParams(reflection_coeff=1e-9, n_echoes=3, passband=None)
    k = make_tube_kernel(p)
    w = k.taps[:, 0, 0]
    assert p.first_arrival == 700  # 6 / 343 * 40000 = 699.7 rounded
    assert int(np.argmax(np.abs(w))) == 700
    assert w[0] == 0.0
    # everything except the later (vanishing) echoes is concentrated there
    assert abs(w[700]) * p.dt == pytest.approx(p.loop_gain, rel=1e-6)


def test_tube_kernel_resonance_comb_spacing():
    p = TubeParams(reflection_coeff=0.7, n_echoes=3, passband=None, kernel_len=4200)
    k = make_tube_kernel(p)
    w = k.taps[:, 0, 0]
    nfft = 1 << 17
    spec = np.abs(np.fft.rfft(w, nfft)) ** 2
    freqs = np.fft.rfftfreq(nfft, d=p.dt)
    # local maxima of the echo-train comb, limited to the analysis band
    band = freqs < 2000.0
    s, f = spec[band], freqs[band]
    peaks = [i for i in range(1, len(s) - 1)
             if s[i] > s[i - 1] and s[i] > s[i + 1] and s[i] > 0.5 * s.max()]
    spacings = np.diff(f[peaks])
    expected = p.speed_of_sound / (2.0 * p.length_m)  # ~28.6 Hz
    assert np.median(spacings) == pytest.approx(expected, rel=0.02)


def test_tube_kernel_tap0_zero_with_filter_and_jitter():
    rng = np.random.default_rng(5)
    k = make_tube_kernel(TubeParams(), rng)
    assert k.taps[0, 0, 0] == 0.0
    assert k.first_nonzero_lag() >= 1


def test_tube_kernel_length_validation():
    with pytest.raises(ConfigurationError):
        make_tube_kernel(TubeParams(kernel_len=800))  # last echo at 3500


def test_tube_kernel_l1_normalization():
    k = make_tube_kernel(TubeParams())
    l1 = k.dt * np.sum(np.abs(k.taps))
    assert l1 == pytest.approx(0.8, rel=1e-9)


# ------------------------------------------------------------- acoustic plant

def small_tube(fs=2000.0, kernel_len=40):
    return TubeParams(length_m=0.5, speed_of_sound=343.0, reflection_coeff=0.5,
                      n_echoes=3, passband=(100.0, 900.0), kernel_len=kernel_len,
                      sample_rate=fs, filter_taps=11)


def test_acoustic_system_matches_direct_scalar_recursion():
    rng = np.random.default_rng(0)
    k = make_tube_kernel(small_tube())
    sys, _ = make_acoustic_system(k)
    n = 200
    s = Signal(rng.standard_normal((1, n)), k.dt)
    tr = forward(sys, s)

    w = k.taps[:, 0, 0]
    a = np.zeros(n)
    for i in range(n):
        pre = 0.0
        for lag in range(len(w)):
            j = i - lag
            if j >= 0:
                pre += w[lag] * (s.samples[0, j] + a[j])
        a[i] = max(0.0, k.dt * pre)
    err = np.max(np.abs(tr.a.samples[0] - a))
    assert err < 1e-10
    np.testing.assert_allclose(tr.o.samples, tr.a.samples, atol=0)  # o == a


def test_acoustic_zero_kernel_silent():
    from echotrain.signal import Kernel

    k = Kernel(np.zeros((5, 1, 1)), 1.0 / 40000.0)
    sys, _ = make_acoustic_system(k)
    s = Signal(np.random.default_rng(1).standard_normal((1, 50)), k.dt)
    tr = forward(sys, s)
    assert np.all(tr.o.samples == 0.0)


def test_acoustic_default_period_is_40_per_second():
    k = make_tube_kernel(TubeParams())
    _, masks = make_acoustic_system(k)
    assert masks.period == 1000
    assert masks.period * k.dt == pytest.approx(1.0 / 40.0)
    k8 = make_tube_kernel(small_tube(fs=8000.0, kernel_len=80))
    _, masks8 = make_acoustic_system(k8)
    assert masks8.period == 200


def test_acoustic_rejects_nonscalar_kernel():
    from echotrain.signal import Kernel

    with pytest.raises(DimensionError):
        make_acoustic_system(Kernel(np.zeros((3, 2, 2)), 0.1))


# -------------------------------------------------------------- optical plant

def test_optical_zero_weights_passthrough():
    p = OpticalParams(n_nodes=3, delay_samples=4)
    sys = make_optical_system(p, W=np.zeros((3, 3)), noise=False)
    rng = np.random.default_rng(2)
    s = Signal(0.9 * rng.uniform(-1, 1, (3, 30)), p.dt)
    tr = forward(sys, s)
    np.testing.assert_allclose(tr.a.samples, s.samples, atol=1e-14)
    np.testing.assert_allclose(tr.o.samples, s.samples, atol=1e-14)


def test_optical_matches_discrete_recurrence():
    p = OpticalParams(n_nodes=4, delay_samples=5)
    rng = np.random.default_rng(3)
    W = random_optical_weights(p, rng, scale=0.8)
    sys = make_optical_system(p, W=W, noise=False)
    n = 60
    s = Signal(rng.uniform(-1.2, 1.2, (4, n)), p.dt)
    tr = forward(sys, s)
    a = np.zeros((4, n))
    for i in range(n):
        pre = s.samples[:, i].copy()
        if i - 5 >= 0:
            pre += W @ a[:, i - 5]
        a[:, i] = np.clip(pre, -1.0, 1.0)
    np.testing.assert_allclose(tr.a.samples, a, atol=1e-12)


def test_optical_update_straddles_mask_boundary_by_nine():
    # D = 109 with period 100: a perturbation in instance i lands 9 samples
    # into instance i+1
    p = OpticalParams(n_nodes=2, delay_samples=109)
    rng = np.random.default_rng(4)
    W = random_optical_weights(p, rng, scale=0.9)
    sys = make_optical_system(p, W=W, noise=False)
    P, n = 100, 400
    base = Signal(0.1 * rng.standard_normal((2, n)), p.dt)
    tr0 = forward(sys, base)
    u = 50  # segment clock position inside instance 1
    j = 1 * P + u
    pert = base.samples.copy()
    pert[0, j] += 0.05
    tr1 = forward(sys, Signal(pert, p.dt))
    diff = np.any(tr1.a.samples != tr0.a.samples, axis=0)
    changed = np.flatnonzero(diff)
    # immediate feedthrough at j, first feedback response exactly at j + 109
    assert changed[0] == j
    later = changed[changed > j]
    assert later[0] == j + 109
    assert (j + 109) // P == 2 and (j + 109) % P == u + 9


def test_optical_gradients_match_fd_with_distortion_off():
    from echotrain.gradients import pipeline_cost, pipeline_gradients, relative_error
    from echotrain.masking import MaskSet
    from oracles import fd_gradient

    p = OpticalParams(n_nodes=3, delay_samples=4, backward_clip=False,
                      backward_error_scale=1.0, backward_normalize_peak=None)
    rng = np.random.default_rng(6)
    W = random_optical_weights(p, rng, scale=0.6)
    sys = make_optical_system(p, W=W, noise=False)
    # small-signal masks keep the clip inactive (locally linear)
    masks = MaskSet(
        m=0.05 * rng.standard_normal((3, 2, 6)),
        u=rng.standard_normal((2, 3, 6)),
        s_b=np.zeros((3, 6)),
        y_b=np.zeros(2),
        period=6,
        dt=p.dt,
    )
    xs = rng.standard_normal((5, 2))
    targets = 0.1 * rng.standard_normal((5, 2))
    bundle = pipeline_gradients(sys, masks, xs, targets)

    def loss_m(flat):
        return pipeline_cost(sys, masks.replace(m=flat.reshape(masks.m.shape)), xs, targets)

    fd = fd_gradient(loss_m, masks.m.ravel(), eps=1e-5)
    assert relative_error(bundle.d_m, fd) < 1e-5

    # trainable mixing matrix: the w_aa tap at lag D
    def loss_w(flat):
        taps = sys.w_aa.taps.copy()
        taps[4] = flat.reshape(3, 3)
        return pipeline_cost(sys.with_kernel("w_aa", taps), masks, xs, targets)

    fd_w = fd_gradient(loss_w, sys.w_aa.taps[4].ravel(), eps=1e-5)
    assert relative_error(bundle.d_w_aa[4], fd_w) < 1e-5


def test_optical_weight_bound_enforced():
    p = OpticalParams(n_nodes=2, delay_samples=3)
    W = np.array([[0.0, 2.5], [0.0, 0.0]])
    with pytest.raises(ConstraintError):
        make_optical_system(p, W=W, noise=False)


# ------------------------------------------------------------ intensity split

def test_intensity_split_zero_matrix():
    W1, W2 = intensity_split(np.zeros((3, 3)))
    np.testing.assert_array_equal(W1, np.ones((3, 3)))
    np.testing.assert_array_equal(W2, np.ones((3, 3)))
    a = np.random.default_rng(7).standard_normal(3)
    out = intensity_recombine(W1, W2, a) - intensity_bias(3)
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


def test_intensity_split_boundary_entry():
    W = np.array([[2.0]])
    W1, W2 = intensity_split(W)
    assert W1[0, 0] == 2.0 and W2[0, 0] == 0.0
    with pytest.raises(ConstraintError):
        intensity_split(np.array([[2.1]]))


def test_intensity_split_recombination_identity():
    rng = np.random.default_rng(8)
    for _ in range(5):
        n = int(rng.integers(2, 7))
        W = rng.uniform(-2.0, 2.0, (n, n))
        a = rng.standard_normal(n)
        W1, W2 = intensity_split(W)
        assert np.all(W1 >= 0.0) and np.all(W2 >= 0.0)
        recovered = intensity_recombine(W1, W2, a) - intensity_bias(n)
        assert np.max(np.abs(recovered - W @ a)) < 1e-12


# -------------------------------------------------------------------- noise

def test_noise_infinite_snr_is_identity():
    x = Signal(np.ones((1, 10)), 1.0)
    y = add_measurement_noise(x, np.inf, np.random.default_rng(9))
    np.testing.assert_array_equal(y.samples, x.samples)


def test_noise_zero_power_signal_unchanged():
    x = Signal.zeros(2, 50, 1.0)
    y = add_measurement_noise(x, 18.0, np.random.default_rng(10))
    np.testing.assert_array_equal(y.samples, x.samples)


def test_noise_empirical_snr_within_half_db():
    rng = np.random.default_rng(11)
    x = Signal(rng.standard_normal((1, 1_000_000)), 1.0)
    y = add_measurement_noise(x, 18.0, np.random.default_rng(12))
    noise = y.samples - x.samples
    snr = 10.0 * np.log10(np.mean(x.samples ** 2) / np.mean(noise ** 2))
    assert abs(snr - 18.0) < 0.5


def test_noise_seed_reproducible():
    rng = np.random.default_rng(13)
    x = Signal(rng.standard_normal((2, 100)), 0.5)
    y1 = add_measurement_noise(x, 10.0, np.random.default_rng(99))
    y2 = add_measurement_noise(x, 10.0, np.random.default_rng(99))
    np.testing.assert_array_equal(y1.samples, y2.samples)
