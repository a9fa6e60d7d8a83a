"""Dense layers, MLPs and batch normalization on top of the autodiff core."""
import numpy as np

from . import tensor as T

ACTIVATIONS = {
    "elu": T.elu,
    "sigmoid": T.sigmoid,
    "tanh": T.tanh,
    "relu": T.relu,
    "softplus": T.softplus,
    None: T.identity,
    "linear": T.identity,
}


def activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None


class Dense:
    """Affine layer. ``init="glorot"``: Glorot-uniform weights, zero bias;
    ``init="uniform"``: weights and bias ~ U(+-gain/sqrt(n_in)); ``init="zeros"``."""

    def __init__(self, store, name, n_in, n_out, rng, init="glorot", gain=1.0):
        if init == "glorot":
            limit = np.sqrt(6.0 / (n_in + n_out))
            w, b = rng.uniform(-limit, limit, size=(n_in, n_out)), np.zeros(n_out)
        elif init == "uniform":
            limit = gain / np.sqrt(n_in)
            w = rng.uniform(-limit, limit, size=(n_in, n_out))
            b = rng.uniform(-limit, limit, size=n_out)
        elif init == "zeros":
            w, b = np.zeros((n_in, n_out)), np.zeros(n_out)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.w = store.add(f"{name}/w", w)
        self.b = store.add(f"{name}/b", b)

    def __call__(self, x):
        return x @ self.w + self.b


class BatchNorm:
    """Per-feature batch norm; ``training`` selects batch vs running statistics."""

    def __init__(self, store, name, n, momentum=0.99, eps=1e-3):
        self.gamma = store.add(f"{name}/gamma", np.ones(n))
        self.beta = store.add(f"{name}/beta", np.zeros(n))
        self.running_mean = np.zeros(n)
        self.running_var = np.ones(n)
        self.momentum = momentum
        self.eps = eps
        self.training = True

    def __call__(self, x):
        if self.training:
            mu = T.mean(x, axis=0)
            centered = x - mu
            var = T.mean(T.square(centered), axis=0)
            m = self.momentum
            self.running_mean = m * self.running_mean + (1 - m) * mu.data
            self.running_var = m * self.running_var + (1 - m) * var.data
            xhat = centered / T.sqrt(var + self.eps)
        else:
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        return xhat * self.gamma + self.beta

    def state(self):
        return {"running_mean": self.running_mean.copy(), "running_var": self.running_var.copy()}

    def load_state(self, state):
        self.running_mean = state["running_mean"].copy()
        self.running_var = state["running_var"].copy()


class MLP:
    """Stack of Dense layers; hidden layers use ``act``, the last uses ``out_act``.

    ``input_gain`` overrides ``gain`` for the first layer only."""

    def __init__(self, store, name, sizes, rng, act="elu", out_act=None, batch_norm=False,
                 init="glorot", gain=1.0, input_gain=None):
        gains = [gain] * (len(sizes) - 1)
        if input_gain is not None:
            gains[0] = input_gain
        self.layers = [Dense(store, f"{name}/dense{i}", a, b, rng, init, g)
                       for i, (a, b, g) in enumerate(zip(sizes[:-1], sizes[1:], gains))]
        self.norms = [BatchNorm(store, f"{name}/bn{i}", n) for i, n in enumerate(sizes[1:-1])] if batch_norm else []
        self.act = activation(act)
        self.out_act = activation(out_act)

    def __call__(self, x):
        h = T.as_tensor(x)
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < last:
                if self.norms:
                    h = self.norms[i](h)
                h = self.act(h)
        return self.out_act(h)

    def train(self, mode=True):
        for bn in self.norms:
            bn.training = mode
