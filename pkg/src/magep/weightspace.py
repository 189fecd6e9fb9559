"""Architecture descriptors and weight-space elements.

A weight space is fixed by the layer count ``L``, the per-layer widths
``n_0 .. n_L``, and a channel dimension ``d`` shared by all weights and
biases (``d = 1`` for plain MLPs, ``d = kernel size`` for convolutional
weights).  An element holds one weight tensor per layer, shaped
``[batch?, d, n_i, n_{i-1}]``, and one bias tensor ``[batch?, d, n_i]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jsonio
from .dense import Rng, tensor
from .errors import ValidationError

__all__ = [
    "WeightSpec",
    "WeightObject",
    "Uniform",
    "Gaussian",
    "dim",
    "random_weights",
    "save",
    "load",
]

WEIGHT_FORMAT = "magep-weights/1"


@dataclass(frozen=True)
class WeightSpec:
    """Layer count, widths ``n_0..n_L`` and channel dimension ``d``.

    ``L = 1`` is rejected: the first and last layers play distinct roles in
    every layer formula of this package, so at least one hidden layer must
    exist.
    """

    L: int
    n: tuple[int, ...]
    d: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        if self.L < 2:
            raise ValidationError(f"layer count must be >= 2, got L={self.L}")
        if len(self.n) != self.L + 1:
            raise ValidationError(
                f"width list must have L+1={self.L + 1} entries, got {len(self.n)}"
            )
        if any(v < 1 for v in self.n):
            raise ValidationError(f"all widths must be >= 1, got n={self.n}")
        if self.d < 1:
            raise ValidationError(f"channel dimension must be >= 1, got d={self.d}")

    def weight_shape(self, i: int) -> tuple[int, int, int]:
        """Unbatched shape of the layer-``i`` weight, ``i`` in ``1..L``."""
        return (self.d, self.n[i], self.n[i - 1])

    def bias_shape(self, i: int) -> tuple[int, int]:
        return (self.d, self.n[i])


def dim(spec: WeightSpec) -> int:
    """Total scalar entry count: sum of d*n_i*n_{i-1} + d*n_i over layers."""
    return sum(
        spec.d * spec.n[i] * spec.n[i - 1] + spec.d * spec.n[i]
        for i in range(1, spec.L + 1)
    )


@dataclass(frozen=True)
class WeightObject:
    """One weight-space element, optionally batched.

    ``W[i-1]`` and ``b[i-1]`` hold layer ``i``; prefer the 1-based accessors
    :meth:`weight` and :meth:`bias`, which match the layer indexing used
    throughout the numerics.
    """

    spec: WeightSpec
    W: tuple[np.ndarray, ...]
    b: tuple[np.ndarray, ...]
    batch: int | None = field(default=None)

    def __post_init__(self):
        W = tuple(tensor(w) for w in self.W)
        b = tuple(tensor(v) for v in self.b)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        spec = self.spec
        if len(W) != spec.L or len(b) != spec.L:
            raise ValidationError(
                f"expected {spec.L} weight and bias tensors, got {len(W)} and {len(b)}"
            )
        prefix = (self.batch,) if self.batch is not None else ()
        for i in range(1, spec.L + 1):
            want_w = prefix + spec.weight_shape(i)
            want_b = prefix + spec.bias_shape(i)
            if W[i - 1].shape != want_w:
                raise ValidationError(
                    f"layer {i} weight has shape {W[i - 1].shape}, expected {want_w}"
                )
            if b[i - 1].shape != want_b:
                raise ValidationError(
                    f"layer {i} bias has shape {b[i - 1].shape}, expected {want_b}"
                )

    def weight(self, i: int) -> np.ndarray:
        return self.W[i - 1]

    def bias(self, i: int) -> np.ndarray:
        return self.b[i - 1]

    def map(self, fn) -> "WeightObject":
        """Apply ``fn`` to every weight and bias tensor."""
        return WeightObject(
            self.spec,
            tuple(fn(w) for w in self.W),
            tuple(fn(v) for v in self.b),
            self.batch,
        )

    def allclose(self, other: "WeightObject", atol: float = 0.0, rtol: float = 0.0) -> bool:
        if self.spec != other.spec or self.batch != other.batch:
            return False
        return all(
            np.allclose(a, b, atol=atol, rtol=rtol)
            for a, b in zip(self.W + self.b, other.W + other.b)
        )

    def equal(self, other: "WeightObject") -> bool:
        """Bit-exact equality."""
        if self.spec != other.spec or self.batch != other.batch:
            return False
        return all(
            np.array_equal(a, b) for a, b in zip(self.W + self.b, other.W + other.b)
        )

    @classmethod
    def zeros(cls, spec: WeightSpec, batch: int | None = None) -> "WeightObject":
        prefix = (batch,) if batch is not None else ()
        return cls(
            spec,
            tuple(np.zeros(prefix + spec.weight_shape(i)) for i in range(1, spec.L + 1)),
            tuple(np.zeros(prefix + spec.bias_shape(i)) for i in range(1, spec.L + 1)),
            batch,
        )


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValidationError(f"uniform bounds out of order: {self.lo} > {self.hi}")

    def sample(self, rng: Rng, size) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size)


@dataclass(frozen=True)
class Gaussian:
    mean: float
    std: float

    def __post_init__(self):
        if self.std <= 0:
            raise ValidationError(f"gaussian std must be positive, got {self.std}")

    def sample(self, rng: Rng, size) -> np.ndarray:
        return rng.gaussian(self.mean, self.std, size)


def random_weights(
    spec: WeightSpec,
    rng: Rng,
    dist: Uniform | Gaussian = Uniform(-1.0, 1.0),
    batch: int | None = None,
) -> WeightObject:
    """Draw every entry i.i.d. from ``dist``; deterministic given the seed."""
    prefix = (batch,) if batch is not None else ()
    W = tuple(
        dist.sample(rng, prefix + spec.weight_shape(i)) for i in range(1, spec.L + 1)
    )
    b = tuple(
        dist.sample(rng, prefix + spec.bias_shape(i)) for i in range(1, spec.L + 1)
    )
    return WeightObject(spec, W, b, batch)


_WEIGHT_KEYS = ("format", "L", "n", "d", "batch", "W", "b")


def save(obj: WeightObject, path) -> None:
    """Write ``obj`` as a self-describing JSON document (``.mgw.json``)."""
    spec = obj.spec
    doc = {
        "format": WEIGHT_FORMAT,
        "L": spec.L,
        "n": list(spec.n),
        "d": spec.d,
        "batch": obj.batch,
        "W": [w for w in obj.W],
        "b": [v for v in obj.b],
    }
    jsonio.dump_path(doc, path)


def _nested_shape_ok(value, shape) -> bool:
    if not shape:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if not isinstance(value, list) or len(value) != shape[0]:
        return False
    return all(_nested_shape_ok(v, shape[1:]) for v in value)


def load(path) -> tuple[WeightSpec, WeightObject]:
    """Read a ``.mgw.json`` document; inverse of :func:`save` bit-exactly."""
    doc = jsonio.load_path(path)
    unknown = set(doc.keys()) - set(_WEIGHT_KEYS)
    if unknown:
        raise ValidationError(f"unknown top-level keys: {sorted(unknown)}")
    missing = set(_WEIGHT_KEYS) - set(doc.keys())
    if missing:
        raise ValidationError(f"missing top-level keys: {sorted(missing)}")
    if doc["format"] != WEIGHT_FORMAT:
        raise ValidationError(f"unsupported format {doc['format']!r}")
    spec = WeightSpec(L=doc["L"], n=tuple(doc["n"]), d=doc["d"])
    batch = doc["batch"]
    if batch is not None and (not isinstance(batch, int) or batch < 1):
        raise ValidationError(f"batch must be null or a positive int, got {batch!r}")
    prefix = (batch,) if batch is not None else ()
    if not isinstance(doc["W"], list) or len(doc["W"]) != spec.L:
        raise ValidationError("W must list one tensor per layer")
    if not isinstance(doc["b"], list) or len(doc["b"]) != spec.L:
        raise ValidationError("b must list one tensor per layer")
    for i in range(1, spec.L + 1):
        if not _nested_shape_ok(doc["W"][i - 1], prefix + spec.weight_shape(i)):
            raise ValidationError(f"layer {i} weight payload has a wrong shape")
        if not _nested_shape_ok(doc["b"][i - 1], prefix + spec.bias_shape(i)):
            raise ValidationError(f"layer {i} bias payload has a wrong shape")
    obj = WeightObject(
        spec,
        tuple(tensor(w) for w in doc["W"]),
        tuple(tensor(v) for v in doc["b"]),
        batch,
    )
    return spec, obj
