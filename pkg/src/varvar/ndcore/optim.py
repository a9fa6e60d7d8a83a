import json
from pathlib import Path

import numpy as np

from .tensor import Tensor


class ParamStore:
    """Named trainable tensors plus Adam moment buffers."""

    def __init__(self):
        self.params = {}
        self.m = {}
        self.v = {}
        self.t = 0

    def add(self, name, value):
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        p = Tensor(value, requires_grad=True, name=name)
        self.params[name] = p
        self.m[name] = np.zeros_like(p.data)
        self.v[name] = np.zeros_like(p.data)
        return p

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self):
        return len(self.params)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def snapshot(self):
        return {k: p.data.copy() for k, p in self.params.items()}

    def restore(self, values):
        for k, v in values.items():
            self.params[k].data = v.copy()

    def save(self, path, manifest=None):
        """Write ``<path>.npz`` (named tensors) and ``<path>.json`` (manifest)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path.with_suffix(".npz"), **self.snapshot())
        meta = dict(manifest or {})
        meta["tensors"] = {k: list(p.shape) for k, p in self.params.items()}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    def load(self, path):
        path = Path(path)
        with np.load(path.with_suffix(".npz")) as blob:
            missing = set(self.params) - set(blob.files)
            if missing:
                raise KeyError(f"checkpoint lacks parameters: {sorted(missing)}")
            self.restore({k: blob[k] for k in self.params})
        return json.loads(path.with_suffix(".json").read_text())


def adam_step(store, lr, beta1=0.9, beta2=0.999, eps=1e-7):
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for name, p in store:
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
    store.t += 1
    c1 = 1.0 - beta1 ** store.t
    c2 = 1.0 - beta2 ** store.t
    for name, p in store:
        g = p.grad
        m = store.m[name] = beta1 * store.m[name] + (1.0 - beta1) * g
        v = store.v[name] = beta2 * store.v[name] + (1.0 - beta2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.grad = None
