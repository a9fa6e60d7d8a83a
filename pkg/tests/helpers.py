import numpy as np

from varvar import ndcore as nd


def numeric_grad(f, x, h=1e-6):
    """Central finite differences of scalar f at array x."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def autodiff_grad(build, *arrays):
    """Gradients of scalar build(*tensors) with respect to each input array."""
    ts = [nd.Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = build(*ts)
    nd.backward(out)
    return [t.grad for t in ts]


def check_grad(build, *arrays, rtol=1e-4, atol=1e-7, h=1e-6):
    """Compare autodiff and finite-difference gradients of build for every input."""
    grads = autodiff_grad(build, *arrays)
    for k, a in enumerate(arrays):
        def f(v, k=k):
            args = [np.array(b, dtype=np.float64) for b in arrays]
            args[k] = v
            with nd.no_grad():
                return float(build(*[nd.Tensor(b) for b in args]).data)
        num = numeric_grad(f, a, h)
        np.testing.assert_allclose(grads[k], num, rtol=rtol, atol=atol, err_msg=f"input {k}")
    return grads
