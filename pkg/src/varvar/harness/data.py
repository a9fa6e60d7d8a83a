"""Datasets: toy heteroscedastic process, numeric CSV, IDX / image-CSV images."""
import csv
import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TOY_TRAIN_RANGE = (0.0, 10.0)
TOY_TEST_RANGE = (-4.0, 14.0)


class DataError(ValueError):
    pass


def whiten_stats(a):
    """Per-column mean and population std; constant columns get scale 1."""
    a = np.asarray(a, dtype=np.float64)
    mean = a.mean(axis=0)
    scale = a.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return mean, scale


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray
    y_scale: np.ndarray
    provenance: str
    name: str = ""
    x_test: np.ndarray = None
    y_test: np.ndarray = None
    extra: dict = field(default_factory=dict)

    @property
    def shape(self):
        """(N observations, dim x, dim y)."""
        return (len(self.x), self.x.shape[1], self.y.shape[1])

    def whiten_x(self, x):
        return (np.asarray(x, dtype=np.float64) - self.x_mean) / self.x_scale

    def whiten_y(self, y):
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_scale

    def dewhiten_y(self, y):
        return np.asarray(y) * self.y_scale + self.y_mean

    @property
    def train(self):
        return self.whiten_x(self.x[self.train_idx]), self.whiten_y(self.y[self.train_idx])

    @property
    def val(self):
        if not len(self.val_idx):
            return None
        return self.whiten_x(self.x[self.val_idx]), self.whiten_y(self.y[self.val_idx])

    @property
    def val_raw(self):
        return self.x[self.val_idx], self.y[self.val_idx]


def make_dataset(x, y, val_fraction, rng, provenance, name="", whiten=True):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x = x[:, None] if x.ndim == 1 else x
    y = y[:, None] if y.ndim == 1 else y
    n = len(x)
    if n == 0 or len(y) != n:
        raise DataError(f"features ({len(x)}) and targets ({len(y)}) must be nonempty and aligned")
    n_val = int(round(val_fraction * n))
    perm = rng.permutation(n)
    val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    if whiten:
        x_mean, x_scale = whiten_stats(x[train_idx])
        y_mean, y_scale = whiten_stats(y[train_idx])
    else:
        x_mean, x_scale = np.zeros(x.shape[1]), np.ones(x.shape[1])
        y_mean, y_scale = np.zeros(y.shape[1]), np.ones(y.shape[1])
    return Dataset(x, y, train_idx, val_idx, x_mean, x_scale, y_mean, y_scale, provenance, name)


# ------------------------------------------------------------------- toy

def toy_true_mean(x):
    return np.asarray(x) * np.sin(x)


def toy_true_std(x):
    return np.abs(0.3 * (1.0 + np.asarray(x)))


def toy_sample(x, rng):
    x = np.asarray(x, dtype=np.float64)
    return toy_true_mean(x) + rng.normal(0.0, 1.0, size=x.shape) * toy_true_std(x)


def toy_generate(n_train=500, rng=None, n_test=1000):
    """Training x ~ U[0, 10]; test on an even grid over [-4, 14] with fresh noise."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if n_train < 1:
        raise DataError("toy dataset needs at least one training point")
    x = rng.uniform(*TOY_TRAIN_RANGE, size=n_train)
    y = toy_sample(x, rng)
    ds = make_dataset(x, y, 0.0, rng, "toy", "toy")
    ds.x_test = np.linspace(*TOY_TEST_RANGE, n_test)[:, None]
    ds.y_test = toy_sample(ds.x_test, rng)
    return ds


def toy_precision_prior(n_points=10_000):
    """MLE Gamma (shape, rate) fitted to the true precision over [0, 10]."""
    from scipy import stats
    xs = np.linspace(*TOY_TRAIN_RANGE, n_points)
    precision = 1.0 / toy_true_std(xs) ** 2
    a, _, scale = stats.gamma.fit(precision, floc=0.0)
    return float(a), float(1.0 / scale)


# ------------------------------------------------------------------- CSV

def _parse_csv(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    data = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} cells, header has {len(header)}")
        for c, cell in enumerate(row):
            try:
                data[r - 2, c] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at row {r}, column {c + 1} ({header[c]!r})") from None
    return header, data


def load_csv(path, target_columns, val_fraction=0.1, rng=None, name=None):
    """Numeric CSV with a header; ``target_columns`` are names or 0-based indices."""
    rng = rng if rng is not None else np.random.default_rng(0)
    header, data = _parse_csv(path)
    if isinstance(target_columns, (str, int)):
        target_columns = [target_columns]
    idx = []
    for t in target_columns:
        if isinstance(t, int):
            if not 0 <= t < len(header):
                raise DataError(f"{path}: target column index {t} out of range")
            idx.append(t)
        elif t in header:
            idx.append(header.index(t))
        else:
            raise DataError(f"{path}: missing target column {t!r}")
    feats = [i for i in range(len(header)) if i not in idx]
    return make_dataset(data[:, feats], data[:, idx], val_fraction, rng, "csv",
                        name or Path(path).stem)


# ---------------------------------------------------------------- images

_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def load_idx(path):
    """Read an IDX (MNIST-format) file, optionally gzipped."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0 or raw[2] not in _IDX_TYPES:
        raise DataError(f"{path}: not an IDX file")
    ndim = raw[3]
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    arr = np.frombuffer(raw, dtype=_IDX_TYPES[raw[2]], offset=4 + 4 * ndim)
    if arr.size != int(np.prod(dims)):
        raise DataError(f"{path}: expected {int(np.prod(dims))} values, found {arr.size}")
    return arr.reshape(dims)


def write_idx(path, array):
    array = np.asarray(array, dtype=np.uint8)
    header = bytes([0, 0, 0x08, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def load_image_csv_dir(path):
    """Directory of per-image CSV pixel matrices, read in sorted filename order."""
    files = sorted(Path(path).glob("*.csv"))
    if not files:
        raise DataError(f"{path}: no image CSV files")
    images = [np.loadtxt(f, delimiter=",", ndmin=2) for f in files]
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise DataError(f"{path}: images have differing shapes {sorted(shapes)}")
    return np.stack(images)


def to_unit_interval(images):
    """Flatten images to (n, pixels) in [0, 1]."""
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    top = x.max() if x.size else 1.0
    return x / 255.0 if top > 1.0 else x


def digits_16x16():
    """scikit-learn's bundled 8x8 digits upsampled bilinearly to 16x16, in [0, 1]."""
    from scipy import ndimage
    from sklearn.datasets import load_digits
    d = load_digits()
    imgs = np.stack([ndimage.zoom(im / 16.0, 2, order=1) for im in d.images])
    return np.clip(imgs, 0.0, 1.0).reshape(len(imgs), -1), d.target


def image_split(x, val_fraction, rng):
    perm = rng.permutation(len(x))
    n_val = int(round(val_fraction * len(x)))
    return x[np.sort(perm[n_val:])], x[np.sort(perm[:n_val])]


def write_grid_csv(path, data, mean, variance, sample, clamp=True):
    """Rows are examples, grouped in data / mean / variance / sample blocks."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blocks = {"data": data, "mean": mean, "variance": variance, "sample": sample}
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "example"] + [f"p{i}" for i in range(np.shape(data)[1])])
        for name, block in blocks.items():
            block = np.asarray(block, dtype=np.float64)
            if clamp:
                block = np.clip(block, 0.0, 1.0)
            for i, row in enumerate(block):
                w.writerow([name, i] + [repr(float(v)) for v in row])
