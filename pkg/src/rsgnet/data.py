"""Datasets in [0,1]: loading, moment estimation, synthesis and batching."""
from __future__ import annotations

import gzip
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError, ParameterError, ParseError
from .networks import sigmoid


@dataclass(frozen=True)
class DataMoments:
    """Average first moment ``mu_x`` and average squared first moment ``tau_x``."""

    mu_x: float
    tau_x: float

    def __post_init__(self):
        for name in ("mu_x", "tau_x"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {v}")
        if self.tau_x > self.mu_x + 1e-12:
            raise ParameterError(f"tau_x={self.tau_x} exceeds mu_x={self.mu_x}")


@dataclass(frozen=True)
class MomentReport:
    moments: DataMoments
    dim_means: np.ndarray

    @property
    def mu_x(self):
        return self.moments.mu_x

    @property
    def tau_x(self):
        return self.moments.tau_x


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray
    targets: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise DataError(f"inputs must be a nonempty S x d matrix, got shape {x.shape}")
        _check_unit_range(x, "inputs")
        object.__setattr__(self, "inputs", x)
        if self.targets is not None:
            y = np.asarray(self.targets, dtype=np.float64)
            if y.ndim != 2 or y.shape[0] != x.shape[0]:
                raise DataError(f"targets of shape {y.shape} do not pair with inputs {x.shape}")
            _check_unit_range(y, "targets")
            object.__setattr__(self, "targets", y)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def d_x(self):
        return self.inputs.shape[1]

    @property
    def d_y(self):
        return None if self.targets is None else self.targets.shape[1]

    def split(self, n_first):
        """Split rows into ``(first n_first rows, remainder)``."""
        if not 0 < n_first < len(self):
            raise DataError(f"cannot split {len(self)} rows at {n_first}")
        t = self.targets
        a = Dataset(self.inputs[:n_first], None if t is None else t[:n_first], dict(self.provenance))
        b = Dataset(self.inputs[n_first:], None if t is None else t[n_first:], dict(self.provenance))
        return a, b


def _check_unit_range(a, name):
    if not np.isfinite(a).all():
        raise DataError(f"{name} contain non-finite values")
    if a.size and (a.min() < 0.0 or a.max() > 1.0):
        raise DataError(f"{name} fall outside [0, 1] (min {a.min()}, max {a.max()})")


def estimate_moments(data) -> MomentReport:
    """Per-dimension sample means ``m_j``; ``mu = mean(m)``, ``tau = mean(m**2)``."""
    x = data.inputs if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if x.shape[0] < 1:
        raise DataError("cannot estimate moments of an empty dataset")
    m = x.mean(axis=0)
    mu = float(np.clip(m.mean(), 0.0, 1.0))
    tau = float(np.clip(np.mean(m * m), 0.0, mu))
    return MomentReport(DataMoments(mu, tau), m)


def _two_point_means(d_x, mu, tau, rng):
    """Per-dimension means with exact average ``mu`` and mean square ``tau``.

    A fraction ``k/d_x`` of the dimensions gets value ``a``, the rest ``b``;
    the split closest to one half that keeps both values in [0, 1] wins.
    """
    var = tau - mu * mu
    if var < -1e-12:
        raise ParameterError(f"tau_x={tau} < mu_x^2={mu * mu}: no means in [0,1] achieve it")
    if var <= 1e-15:
        return np.full(d_x, mu)
    best = None
    for k in range(1, d_x):
        p = k / d_x
        a = mu - np.sqrt(var * (1 - p) / p)
        b = mu + np.sqrt(var * p / (1 - p))
        if a >= -1e-12 and b <= 1 + 1e-12:
            if best is None or abs(p - 0.5) < abs(best[0] - 0.5):
                best = (p, k, min(max(a, 0.0), 1.0), min(max(b, 0.0), 1.0))
    if best is None:
        raise ParameterError(f"(mu_x={mu}, tau_x={tau}) not reachable with d_x={d_x} dimensions")
    _, k, a, b = best
    means = np.full(d_x, b)
    means[rng.permutation(d_x)[:k]] = a
    return means


def synthesize_dataset(d_x, d_y, S, target: DataMoments, rng, concentration=4.0, teacher_scale=4.0):
    """Synthetic inputs with controlled moments plus teacher-network targets.

    Each input column ``j`` is Beta distributed with mean ``m_j``; the ``m_j``
    come from a two-point construction matching ``target`` exactly, so only
    sampling noise separates the achieved moments from the target.  Targets
    are ``sigmoid(W_t x)`` for a fixed random teacher ``W_t``; ``d_y`` of 0 or
    ``None`` yields an unsupervised dataset.
    """
    if not isinstance(target, DataMoments):
        target = DataMoments(*target)
    if S < 1 or d_x < 1:
        raise ParameterError("S and d_x must be positive")
    means = _two_point_means(d_x, target.mu_x, target.tau_x, rng)
    x = np.empty((S, d_x))
    for j, m in enumerate(means):
        if m <= 0.0:
            x[:, j] = 0.0
        elif m >= 1.0:
            x[:, j] = 1.0
        else:
            x[:, j] = rng.beta(m * concentration, (1.0 - m) * concentration, size=S)
    y = None
    if d_y:
        teacher = rng.normal(0.0, teacher_scale / np.sqrt(d_x), size=(d_y, d_x))
        centred = x - x.mean(axis=0)
        y = sigmoid(centred @ teacher.T)
    prov = {"source": "synthetic", "mu_x": target.mu_x, "tau_x": target.tau_x,
            "construction": "two-point per-dimension means, beta entries"}
    return Dataset(x, y, prov)


def minibatch(data: Dataset, B, rng):
    """Draw ``B`` rows uniformly with replacement; returns ``(X, Y_or_None)``."""
    if B < 1:
        raise ParameterError(f"batch size must be >= 1, got {B}")
    if len(data) < 1:
        raise DataError("cannot draw a batch from an empty dataset")
    idx = rng.integers(0, len(data), size=B)
    y = None if data.targets is None else data.targets[idx]
    return data.inputs[idx], y


# ---------------------------------------------------------------- loading

_IDX_DTYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def _read_bytes(path):
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path, expected_magic=None):
    """Decode a big-endian IDX container into an array."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise ParseError("truncated IDX header", offset=len(raw))
    zero, code, ndim = struct.unpack(">HBB", raw[:4])
    magic = struct.unpack(">I", raw[:4])[0]
    if zero != 0 or code not in _IDX_DTYPES:
        raise ParseError(f"bad IDX magic 0x{magic:08x}", offset=0)
    if expected_magic is not None and magic != expected_magic:
        raise ParseError(f"IDX magic {magic} where {expected_magic} was expected", offset=0)
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise ParseError("truncated IDX dimension table", offset=len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    dtype = np.dtype(_IDX_DTYPES[code])
    need = head + int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(raw) < need:
        raise ParseError(f"IDX payload holds {len(raw) - head} bytes, {need - head} required",
                         offset=len(raw))
    return np.frombuffer(raw, dtype=dtype, count=int(np.prod(dims)), offset=head).reshape(dims)


def write_idx(path, array):
    """Write an unsigned-byte array as IDX (used for fixtures and exports)."""
    a = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">HBB", 0, 0x08, a.ndim) + struct.pack(f">{a.ndim}I", *a.shape)
    Path(path).write_bytes(header + a.tobytes())


def one_hot(labels):
    labels = np.asarray(labels)
    if labels.size and (np.any(labels < 0) or np.any(labels != np.round(labels))):
        raise DataError("categorical labels must be nonnegative integers")
    labels = labels.astype(np.int64)
    out = np.zeros((labels.size, int(labels.max()) + 1 if labels.size else 0))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _normalize(x, rule):
    if rule == "none":
        return x
    if rule == "scale255":
        return x / 255.0
    if rule == "minmax":
        lo, hi = x.min(axis=0), x.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        return (x - lo) / span
    raise ParameterError(f"unknown normalization {rule!r}")


def _parse_csv(path):
    raw = Path(path).read_bytes()
    rows, offset, width = [], 0, None
    for line in io.BytesIO(raw):
        start, offset = offset, offset + len(line)
        text = line.decode("utf-8", errors="strict").strip()
        if not text:
            continue
        fields = [f.strip() for f in text.split(",")]
        try:
            values = [float(f) for f in fields]
        except ValueError:
            if not rows and start == 0:
                continue  # header line
            raise ParseError(f"non-numeric field in {text!r}", offset=start) from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ParseError(f"row has {len(values)} fields, expected {width}", offset=start)
        rows.append(values)
    if not rows:
        raise ParseError("no data rows", offset=len(raw))
    return np.asarray(rows, dtype=np.float64)


def load_dataset(path, fmt="csv", normalization="none", label_column=None, label_path=None):
    """Load inputs (and optional categorical labels) into a :class:`Dataset`.

    ``fmt="csv"``: comma separated, optional header line; ``label_column``
    selects the label column (negative indices count from the end).
    ``fmt="idx"``: ``path`` is an image container (magic 2051) and
    ``label_path`` an optional label container (magic 2049).  Labels are
    one-hot encoded.
    """
    if fmt == "csv":
        table = _parse_csv(path)
        labels = None
        if label_column is not None:
            col = label_column % table.shape[1]
            labels = table[:, col]
            table = np.delete(table, col, axis=1)
        x = table
    elif fmt in ("idx", "idx-image+idx-label"):
        images = read_idx(path, expected_magic=2051)
        x = images.reshape(images.shape[0], -1).astype(np.float64)
        labels = None
        if label_path is not None:
            labels = read_idx(label_path, expected_magic=2049)
            if labels.shape[0] != x.shape[0]:
                raise ParseError(f"{labels.shape[0]} labels for {x.shape[0]} images", offset=4)
    else:
        raise ParameterError(f"unknown format {fmt!r}")
    x = _normalize(x, normalization)
    targets = None if labels is None else one_hot(labels)
    return Dataset(x, targets, {"source": str(path), "format": fmt, "normalization": normalization})
