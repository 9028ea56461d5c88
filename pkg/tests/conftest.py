import numpy as np
import pytest

from funduseg import backend


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance checks (slow)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture(params=["numpy", "numba"])
def kernel_backend(request):
    """Run a test under each kernel backend, restoring the default after."""
    name = request.param
    if name == "numba" and not backend.HAS_NUMBA:
        pytest.skip("numba not installed")
    previous = backend.get_backend()
    backend.set_backend(name)
    yield name
    backend.set_backend(previous)


def random_one_hot(rng, shape, channels):
    """Random one-hot NHWC target tensor."""
    lab = rng.integers(0, channels, size=shape)
    return np.eye(channels, dtype=np.float64)[lab]


def gradcheck_all_params(cfg, x, y, seed=11, h=1e-5, bias_jitter=0.05):
    """Central finite differences of focal_loss(forward(.)) against backward()
    for every parameter. Returns the worst relative error.

    Biases get a small jitter so no ReLU pre-activation sits exactly at the
    kink (zero-init biases put entire dead receptive fields at 0, where the
    one-sided subgradient and the centered difference legitimately disagree).
    """
    from funduseg.losses import FocalConfig, focal_loss_tensor
    from funduseg.net import backward, forward, init_params

    params = init_params(cfg, seed, dtype=np.float64)
    jitter = np.random.default_rng(seed + 1)
    for k in params:
        if k.endswith(".b"):
            params[k] = params[k] + jitter.normal(0.0, bias_jitter, params[k].shape)
    alphas = FocalConfig().alphas_for(cfg.roles())

    def loss_of(p):
        probs, _ = forward(p, cfg, x)
        return focal_loss_tensor(probs, y, alphas, 2.0)[0]

    probs, cache = forward(params, cfg, x)
    _, dprobs = focal_loss_tensor(probs, y, alphas, 2.0)
    grads = backward(params, cfg, cache, dprobs)
    worst = 0.0
    for k in params:
        flat = params[k].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_of(params)
            flat[i] = orig - h
            lm = loss_of(params)
            flat[i] = orig
            fd = (lp - lm) / (2 * h)
            an = grads[k].reshape(-1)[i]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-12)
            worst = max(worst, rel)
    return worst
