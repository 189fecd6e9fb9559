"""Closed-form toy fitting on invariant features.

For frozen connection matrices the invariant layer is linear in its
coefficient blocks, so fitting those blocks against any target reduces to
ridge regression on a fixed feature vector.  The features are exactly the
scalars the invariant layer contracts against, in a canonical order that is
part of the public contract (per channel: the two full boundary blocks,
the per-layer traces, the ``[bW]`` boundary block, the per-``t`` ``[Wb]``
entries and traces, the last bias, then one trailing constant).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jsonio
from .dense import Rng
from .errors import ValidationError
from .stableterms import PsiParams, all_terms
from .weightspace import WeightObject

__all__ = [
    "FEATURE_ORDER_VERSION",
    "FIT_FORMAT",
    "FitDataset",
    "FitResult",
    "feature_count",
    "featurize",
    "fit_ridge",
    "predict",
    "evaluate",
    "save_fit",
    "load_fit",
]

FEATURE_ORDER_VERSION = "magep-feat/1"
FIT_FORMAT = "magep-fit/1"


def feature_count(spec) -> int:
    """Number of invariant features, the trailing constant included."""
    L = spec.L
    n0, nL = spec.n[0], spec.n[L]
    per_channel = 3 * nL * n0 + (L - 1) + (L - 1) * nL + (L - 1) + nL
    return spec.d * per_channel + 1


def featurize(U: WeightObject, psi: PsiParams) -> np.ndarray:
    """Invariant feature vector of one unbatched weight object.

    Canonical order, for each channel c = 1..d: (1) ``[WW]^(L,0)(L,0)``
    row-major, (2) ``[W]^(L,0)``, (3) traces of ``[WW]^(s,0)(L,s)`` for
    s = L-1..1, (4) ``[bW]^(L)(L,0)``, (5) ``[Wb]^(L,t)(t)`` for
    t = L-1..1, (6) traces of ``[bW]^(t)(L,t)`` for t = L-1..1,
    (7) ``[b]^(L)``; then one trailing constant 1.
    """
    if U.batch is not None:
        raise ValidationError("featurize expects an unbatched weight object")
    spec = U.spec
    L = spec.L
    terms = all_terms(U, psi)
    parts = []
    for c in range(spec.d):
        parts.append(terms.ww[(L, 0)][c].ravel())
        parts.append(terms.w[(L, 0)][c].ravel())
        parts.append(
            np.array([np.trace(terms.ww[(s, s)][c]) for s in range(L - 1, 0, -1)])
        )
        parts.append(terms.bw[(L, 0)][c].ravel())
        for t in range(L - 1, 0, -1):
            parts.append(terms.wb[(L, t)][c].ravel())
        parts.append(
            np.array([np.trace(terms.bw[(t, t)][c]) for t in range(L - 1, 0, -1)])
        )
        parts.append(terms.b[L][c].ravel())
    parts.append(np.ones(1))
    out = np.concatenate(parts)
    assert out.size == feature_count(spec)
    return out


@dataclass(frozen=True)
class FitDataset:
    """Weight objects with target rows; all objects share one architecture."""

    objects: tuple[WeightObject, ...]
    targets: np.ndarray  # [N, T]

    def __post_init__(self):
        objects = tuple(self.objects)
        targets = np.asarray(self.targets, dtype=np.float64)
        if targets.ndim == 1:
            targets = targets[:, None]
        object.__setattr__(self, "objects", objects)
        object.__setattr__(self, "targets", targets)
        if len(objects) != targets.shape[0]:
            raise ValidationError(
                f"{len(objects)} objects but {targets.shape[0]} target rows"
            )
        if objects:
            spec = objects[0].spec
            for u in objects:
                if u.spec != spec:
                    raise ValidationError("fit dataset must be spec-homogeneous")
                if u.batch is not None:
                    raise ValidationError("fit dataset rows must be unbatched")

    def __len__(self) -> int:
        return len(self.objects)

    def split(self, train_fraction: float, rng: Rng) -> tuple["FitDataset", "FitDataset"]:
        """Deterministic shuffled train/test split."""
        if not 0.0 < train_fraction < 1.0:
            raise ValidationError(f"train fraction must be in (0, 1), got {train_fraction}")
        order = rng.permutation(len(self))
        cut = int(round(train_fraction * len(self)))
        take = lambda idx: FitDataset(
            tuple(self.objects[i] for i in idx), self.targets[idx]
        )
        return take(order[:cut]), take(order[cut:])


@dataclass(frozen=True)
class FitResult:
    """Fitted coefficients in the canonical feature order."""

    phi: np.ndarray  # [F, T]
    lam: float
    train_mse: float
    test_mse: float | None = None
    rank_deficient: bool = False

    def __post_init__(self):
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=np.float64))
        if self.phi.ndim != 2:
            raise ValidationError("phi must be a [features, targets] matrix")
        if self.train_mse < 0 or (self.test_mse is not None and self.test_mse < 0):
            raise ValidationError("mean squared errors cannot be negative")

    def with_test_mse(self, value: float) -> "FitResult":
        return FitResult(self.phi, self.lam, self.train_mse, value, self.rank_deficient)


def design_matrix(data: FitDataset, psi: PsiParams) -> np.ndarray:
    return np.stack([featurize(u, psi) for u in data.objects])


def fit_ridge(train: FitDataset, psi: PsiParams, lam: float) -> FitResult:
    """Minimize ``|X phi - y|^2 + lam |phi|^2`` exactly.

    For ``lam > 0`` the normal equations are solved by Cholesky; if the
    computed Gram matrix is numerically indefinite (exactly collinear
    features at degenerate widths), the same objective is re-solved through
    the augmented least-squares system, and the result is flagged.  For
    ``lam = 0`` the minimum-norm least-squares solution is returned, flagged
    when X is rank-deficient.
    """
    if len(train) < 1:
        raise ValidationError("fit needs at least one training row")
    if lam < 0:
        raise ValidationError(f"ridge strength must be >= 0, got {lam}")
    X = design_matrix(train, psi)
    y = train.targets
    F = X.shape[1]
    rank_deficient = False
    if lam == 0.0:
        phi, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
        rank_deficient = rank < F
    else:
        gram = X.T @ X + lam * np.eye(F)
        try:
            chol = np.linalg.cholesky(gram)
            phi = np.linalg.solve(chol.T, np.linalg.solve(chol, X.T @ y))
        except np.linalg.LinAlgError:
            aug = np.vstack([X, np.sqrt(lam) * np.eye(F)])
            rhs = np.vstack([y, np.zeros((F, y.shape[1]))])
            phi, _, rank, _ = np.linalg.lstsq(aug, rhs, rcond=None)
            rank_deficient = True
    train_mse = float(np.mean((X @ phi - y) ** 2))
    return FitResult(phi, float(lam), train_mse, None, rank_deficient)


def predict(result: FitResult, U: WeightObject, psi: PsiParams) -> np.ndarray:
    return featurize(U, psi) @ result.phi


def evaluate(result: FitResult, data: FitDataset, psi: PsiParams) -> float:
    """Mean squared residual of the fitted predictor over ``data``."""
    if len(data) == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    X = design_matrix(data, psi)
    return float(np.mean((X @ result.phi - data.targets) ** 2))


def save_fit(result: FitResult, path) -> None:
    """Write a fit result as a ``.mgfit.json`` document.

    ``phi`` is stored as one row per feature (``width`` columns each) so the
    matrix reloads unambiguously.
    """
    doc = {
        "format": FIT_FORMAT,
        "feature_order_version": FEATURE_ORDER_VERSION,
        "lambda": result.lam,
        "width": result.phi.shape[1],
        "phi": result.phi,
        "train_mse": result.train_mse,
        "test_mse": result.test_mse,
    }
    jsonio.dump_path(doc, path)


def load_fit(path) -> FitResult:
    doc = jsonio.load_path(path)
    if doc.get("format") != FIT_FORMAT:
        raise ValidationError(f"unsupported format {doc.get('format')!r}")
    if doc.get("feature_order_version") != FEATURE_ORDER_VERSION:
        raise ValidationError(
            f"unsupported feature order {doc.get('feature_order_version')!r}"
        )
    phi = np.asarray(doc["phi"], dtype=np.float64)
    if phi.ndim != 2 or phi.shape[1] != doc["width"]:
        raise ValidationError("phi payload does not match the declared width")
    return FitResult(
        phi,
        float(doc["lambda"]),
        float(doc["train_mse"]),
        None if doc["test_mse"] is None else float(doc["test_mse"]),
    )
