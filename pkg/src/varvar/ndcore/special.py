"""Log-gamma, digamma and trigamma on float64 arrays.

All three use the argument-raising recurrence until x >= 16 followed by the
asymptotic (Stirling / de Moivre) series. Valid for every positive real;
nonpositive inputs give nan.
"""
import numpy as np

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_SHIFT_TO = 16.0
_MAX_SHIFTS = 17


def _prepare(x):
    x = np.asarray(x, dtype=np.float64)
    bad = ~(x > 0)
    x = np.where(bad, 1.0, x)
    return x, bad


def lgamma(x):
    x, bad = _prepare(x)
    acc = np.zeros_like(x)
    for _ in range(_MAX_SHIFTS):
        small = x < _SHIFT_TO
        if not small.any():
            break
        acc = acc - np.where(small, np.log(x), 0.0)
        x = np.where(small, x + 1.0, x)
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv * (1.0 / 12 + inv2 * (-1.0 / 360 + inv2 * (1.0 / 1260 + inv2 * (-1.0 / 1680 + inv2 / 1188))))
    out = (x - 0.5) * np.log(x) - x + _HALF_LOG_2PI + series + acc
    return np.where(bad, np.nan, out)


def digamma(x):
    x, bad = _prepare(x)
    acc = np.zeros_like(x)
    for _ in range(_MAX_SHIFTS):
        small = x < _SHIFT_TO
        if not small.any():
            break
        acc = acc - np.where(small, 1.0 / x, 0.0)
        x = np.where(small, x + 1.0, x)
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 / 132))))
    out = np.log(x) - 0.5 * inv - series + acc
    return np.where(bad, np.nan, out)


def trigamma(x):
    x, bad = _prepare(x)
    acc = np.zeros_like(x)
    for _ in range(_MAX_SHIFTS):
        small = x < _SHIFT_TO
        if not small.any():
            break
        acc = acc + np.where(small, 1.0 / (x * x), 0.0)
        x = np.where(small, x + 1.0, x)
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv * (1.0 + inv * (0.5 + inv * (1.0 / 6 - inv2 * (1.0 / 30 - inv2 * (1.0 / 42 - inv2 * (1.0 / 30 - inv2 * 5.0 / 66))))))
    return np.where(bad, np.nan, series + acc)
