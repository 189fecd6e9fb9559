"""Independent reference paths: naive-loop layer forwards and numerical
rank checks of stable-term feature families.

The naive forwards evaluate the layer formulas summation by summation on
nested Python lists, with no contraction library, so they can certify the
einsum-based forwards.  The rank machinery realizes "linear independence
of stable polynomial terms as functions" numerically: a family of terms is
independent iff its design matrix of random evaluations has full column
rank, which we certify through the singular-value ratio of a 3x-oversampled
matrix.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .dense import Rng
from .errors import ValidationError
from .fitting import featurize
from .layers import EquivariantParams, InvariantParams
from .stableterms import PsiParams, all_terms, psi_indices, w_indices, wb_indices
from .weightspace import Uniform, WeightObject, WeightSpec, random_weights

__all__ = [
    "naive_equivariant_forward",
    "naive_invariant_forward",
    "FAMILY_TOKENS",
    "feature_labels",
    "feature_design_matrix",
    "independence_report",
    "RANK_THRESHOLD",
]

RANK_THRESHOLD = 1e-6
OVERSAMPLE = 3


# ---------------------------------------------------------------------------
# Naive-loop forwards


def _matprod(A, B):
    rows, inner, cols = len(A), len(B), len(B[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for k in range(cols):
            acc = 0.0
            for j in range(inner):
                acc += A[i][j] * B[j][k]
            out[i][k] = acc
    return out


def _naive_terms(spec: WeightSpec, Wl, bl, psi_bw, psi_ww):
    """All stable-term families on nested lists, one channel at a time."""
    L, d = spec.L, spec.d
    chains = {}
    for t in range(L):
        chains[(t + 1, t)] = [Wl[t][c] for c in range(d)]
        for s in range(t + 2, L + 1):
            prev = chains[(s - 1, t)]
            chains[(s, t)] = [_matprod(Wl[s - 1][c], prev[c]) for c in range(d)]
    wb = {}
    for s, t in wb_indices(L):
        wb[(s, t)] = [
            [
                sum(chains[(s, t)][c][p][q] * bl[t - 1][c][q] for q in range(spec.n[t]))
                for p in range(spec.n[s])
            ]
            for c in range(d)
        ]
    bw = {}
    ww = {}
    for s, t in psi_indices(L):
        row = psi_bw[(s, t)][0]
        bw[(s, t)] = []
        for c in range(d):
            bridge = [
                sum(row[m] * chains[(L, t)][c][m][q] for m in range(spec.n[L]))
                for q in range(spec.n[t])
            ]
            bw[(s, t)].append(
                [
                    [bl[s - 1][c][p] * bridge[q] for q in range(spec.n[t])]
                    for p in range(spec.n[s])
                ]
            )
        ww[(s, t)] = [
            _matprod(_matprod(chains[(s, 0)][c], psi_ww[(s, t)]), chains[(L, t)][c])
            for c in range(d)
        ]
    return chains, wb, bw, ww


def _unbatch(U: WeightObject):
    if U.batch is None:
        return [U], False
    rows = []
    for r in range(U.batch):
        rows.append(
            WeightObject(
                U.spec,
                tuple(w[r] for w in U.W),
                tuple(v[r] for v in U.b),
                batch=None,
            )
        )
    return rows, True


def _naive_equivariant_single(params: EquivariantParams, U: WeightObject):
    spec, e = params.spec, params.e
    L, d = spec.L, spec.d
    Wl = [U.weight(i).tolist() for i in range(1, L + 1)]
    bl = [U.bias(i).tolist() for i in range(1, L + 1)]
    psi_bw = {k: v.tolist() for k, v in params.psi.bw.items()}
    psi_ww = {k: v.tolist() for k, v in params.psi.ww.items()}
    chains, wb, bw, ww = _naive_terms(spec, Wl, bl, psi_bw, psi_ww)

    def trace(mat_c):
        return sum(mat_c[p][p] for p in range(len(mat_c)))

    W_out = []
    b_out = []

    # i = 1
    p_w = params.phiW_1_W.tolist()
    p_ww = params.phiW_1_WW.tolist()
    p_bw = params.phiW_1_bW.tolist()
    p_b = params.phiW_1_b.tolist()
    n0, n1 = spec.n[0], spec.n[1]
    EW1 = [[[0.0] * n0 for _ in range(n1)] for _ in range(e)]
    for co in range(e):
        for j in range(n1):
            for k in range(n0):
                acc = 0.0
                for c in range(d):
                    for q in range(n0):
                        acc += chains[(1, 0)][c][j][q] * p_w[c][co][q][k]
                        acc += ww[(1, 0)][c][j][q] * p_ww[c][co][q][k]
                        acc += bw[(1, 0)][c][j][q] * p_bw[c][co][q][k]
                    acc += bl[0][c][j] * p_b[c][co][k]
                EW1[co][j][k] = acc
    q_w = params.phib_1_W.tolist()
    q_ww = params.phib_1_WW.tolist()
    q_bw = params.phib_1_bW.tolist()
    q_b = params.phib_1_b.tolist()
    Eb1 = [[0.0] * n1 for _ in range(e)]
    for co in range(e):
        for j in range(n1):
            acc = 0.0
            for c in range(d):
                for q in range(n0):
                    acc += chains[(1, 0)][c][j][q] * q_w[c][co][q]
                    acc += ww[(1, 0)][c][j][q] * q_ww[c][co][q]
                    acc += bw[(1, 0)][c][j][q] * q_bw[c][co][q]
                acc += bl[0][c][j] * q_b[c][co]
            Eb1[co][j] = acc
    W_out.append(EW1)
    b_out.append(Eb1)

    # 1 < i < L
    for i in range(2, L):
        blk = params.mid[i]
        s_w, s_ww, s_bw = blk.w.tolist(), blk.ww.tolist(), blk.bw.tolist()
        v_w, v_ww, v_bw = blk.b_w.tolist(), blk.b_ww.tolist(), blk.b_bw.tolist()
        v_wb = {t: v.tolist() for t, v in blk.b_wb.items()}
        v_b = blk.b_b.tolist()
        ni, nim1 = spec.n[i], spec.n[i - 1]
        EWi = [[[0.0] * nim1 for _ in range(ni)] for _ in range(e)]
        for co in range(e):
            for j in range(ni):
                for k in range(nim1):
                    acc = 0.0
                    for c in range(d):
                        acc += chains[(i, i - 1)][c][j][k] * s_w[c][co]
                        acc += ww[(i, i - 1)][c][j][k] * s_ww[c][co]
                        acc += bw[(i, i - 1)][c][j][k] * s_bw[c][co]
                    EWi[co][j][k] = acc
        Ebi = [[0.0] * ni for _ in range(e)]
        for co in range(e):
            for j in range(ni):
                acc = 0.0
                for c in range(d):
                    for q in range(n0):
                        acc += chains[(i, 0)][c][j][q] * v_w[c][co][q]
                        acc += ww[(i, 0)][c][j][q] * v_ww[c][co][q]
                        acc += bw[(i, 0)][c][j][q] * v_bw[c][co][q]
                    for t in range(1, i):
                        acc += wb[(i, t)][c][j] * v_wb[t][c][co]
                    acc += bl[i - 1][c][j] * v_b[c][co]
                Ebi[co][j] = acc
        W_out.append(EWi)
        b_out.append(Ebi)

    # i = L
    nL, nLm1 = spec.n[L], spec.n[L - 1]
    r_w = params.phiW_L_W.tolist()
    r_ww = params.phiW_L_WW.tolist()
    r_bw = params.phiW_L_bW.tolist()
    EWL = [[[0.0] * nLm1 for _ in range(nL)] for _ in range(e)]
    for co in range(e):
        for j in range(nL):
            for k in range(nLm1):
                acc = 0.0
                for c in range(d):
                    for p in range(nL):
                        acc += r_w[co][c][p][j] * chains[(L, L - 1)][c][p][k]
                        acc += r_ww[co][c][p][j] * ww[(L, L - 1)][c][p][k]
                        acc += r_bw[co][c][p][j] * bw[(L, L - 1)][c][p][k]
                EWL[co][j][k] = acc
    g_wwll = params.phib_L_WWLL.tolist()
    g_wl0 = params.phib_L_WL0.tolist()
    g_bwll0 = params.phib_L_bWLL0.tolist()
    g_trww = {s: v.tolist() for s, v in params.phib_L_trWW.items()}
    g_wb = {t: v.tolist() for t, v in params.phib_L_Wb.items()}
    g_trbw = {t: v.tolist() for t, v in params.phib_L_trbW.items()}
    g_b = params.phib_L_b.tolist()
    g_1 = params.phib_L_1.tolist()
    EbL = [[0.0] * nL for _ in range(e)]
    for co in range(e):
        for j in range(nL):
            acc = g_1[co][j]
            for c in range(d):
                for p in range(nL):
                    for q in range(n0):
                        acc += g_wwll[co][c][p][q][j] * ww[(L, 0)][c][p][q]
                        acc += g_wl0[co][c][p][q][j] * chains[(L, 0)][c][p][q]
                        acc += g_bwll0[co][c][p][q][j] * bw[(L, 0)][c][p][q]
                    acc += g_b[co][c][p][j] * bl[L - 1][c][p]
                for s in range(1, L):
                    acc += g_trww[s][co][c][j] * trace(ww[(s, s)][c])
                for t in range(1, L):
                    for p in range(nL):
                        acc += g_wb[t][co][c][p][j] * wb[(L, t)][c][p]
                    acc += g_trbw[t][co][c][j] * trace(bw[(t, t)][c])
            EbL[co][j] = acc
    W_out.append(EWL)
    b_out.append(EbL)

    return WeightObject(
        params.out_spec(),
        tuple(np.asarray(w, dtype=np.float64) for w in W_out),
        tuple(np.asarray(v, dtype=np.float64) for v in b_out),
        batch=None,
    )


def naive_equivariant_forward(params: EquivariantParams, U: WeightObject) -> WeightObject:
    """Literal nested-loop evaluation of the equivariant layer."""
    rows, batched = _unbatch(U)
    outs = [_naive_equivariant_single(params, r) for r in rows]
    if not batched:
        return outs[0]
    return WeightObject(
        params.out_spec(),
        tuple(np.stack([o.W[i] for o in outs]) for i in range(params.spec.L)),
        tuple(np.stack([o.b[i] for o in outs]) for i in range(params.spec.L)),
        batch=U.batch,
    )


def _naive_invariant_single(params: InvariantParams, U: WeightObject) -> np.ndarray:
    spec, e, dp = params.spec, params.e, params.d_out
    L, d = spec.L, spec.d
    n0, nL = spec.n[0], spec.n[L]
    Wl = [U.weight(i).tolist() for i in range(1, L + 1)]
    bl = [U.bias(i).tolist() for i in range(1, L + 1)]
    psi_bw = {k: v.tolist() for k, v in params.psi.bw.items()}
    psi_ww = {k: v.tolist() for k, v in params.psi.ww.items()}
    chains, wb, bw, ww = _naive_terms(spec, Wl, bl, psi_bw, psi_ww)

    def trace(mat_c):
        return sum(mat_c[p][p] for p in range(len(mat_c)))

    p_wwll = params.phi_WWLL.tolist()
    p_wl0 = params.phi_WL0.tolist()
    p_trww = {s: v.tolist() for s, v in params.phi_trWW.items()}
    p_bwll0 = params.phi_bWLL0.tolist()
    p_wb = {t: v.tolist() for t, v in params.phi_Wb.items()}
    p_trbw = {t: v.tolist() for t, v in params.phi_trbW.items()}
    p_b = params.phi_b.tolist()
    p_1 = params.phi_1.tolist()
    out = [[0.0] * dp for _ in range(e)]
    for co in range(e):
        for k in range(dp):
            acc = p_1[co][k]
            for c in range(d):
                for p in range(nL):
                    for q in range(n0):
                        acc += ww[(L, 0)][c][p][q] * p_wwll[c][co][p][q][k]
                        acc += chains[(L, 0)][c][p][q] * p_wl0[c][co][p][q][k]
                        acc += bw[(L, 0)][c][p][q] * p_bwll0[c][co][p][q][k]
                    acc += bl[L - 1][c][p] * p_b[c][co][p][k]
                for s in range(1, L):
                    acc += trace(ww[(s, s)][c]) * p_trww[s][c][co][k]
                for t in range(1, L):
                    for p in range(nL):
                        acc += wb[(L, t)][c][p] * p_wb[t][c][co][p][k]
                    acc += trace(bw[(t, t)][c]) * p_trbw[t][c][co][k]
            out[co][k] = acc
    return np.asarray(out, dtype=np.float64)


def naive_invariant_forward(params: InvariantParams, U: WeightObject) -> np.ndarray:
    """Literal nested-loop evaluation of the invariant layer."""
    rows, batched = _unbatch(U)
    outs = [_naive_invariant_single(params, r) for r in rows]
    return np.stack(outs) if batched else outs[0]


# ---------------------------------------------------------------------------
# Design matrices and rank checks

FAMILY_TOKENS = (
    "w",        # every [W]^(s,t)
    "w_noL0",   # [W]^(s,t) with (s,t) != (L,0)
    "w_L0",     # [W]^(L,0) only
    "b",        # every [b]^(s)
    "wb",       # every [Wb]^(s,t)(t)
    "wb_noL",   # [Wb]^(s,t)(t) with s < L
    "wb_L",     # [Wb]^(L,t)(t)
    "bw",       # every [bW]^(s)(L,t)
    "bw_diag",  # [bW]^(t)(L,t) entries, 0 < t < L
    "ww",       # every [WW]^(s,0)(L,t)
    "ww_diag",  # [WW]^(s,0)(L,s) entries, 0 < s < L
    "eq17",     # the canonical invariant feature vector (includes the constant)
    "const",    # the constant-1 column
)


def _family_columns(spec: WeightSpec, families: Sequence[str]):
    """Per-family (label, extractor) pairs; extractors map a StableTermSet
    plus weight object to a flat list of floats."""
    L, d = spec.L, spec.d
    cols = []
    for fam in families:
        if fam not in FAMILY_TOKENS:
            raise ValidationError(f"unknown feature family {fam!r}")
        if fam in ("w", "w_noL0", "w_L0"):
            pairs = w_indices(L)
            if fam == "w_noL0":
                pairs = [p for p in pairs if p != (L, 0)]
            if fam == "w_L0":
                pairs = [(L, 0)]
            for s, t in pairs:
                cols.append(
                    (f"W({s},{t})", lambda T, U, s=s, t=t: T.w[(s, t)].ravel())
                )
        elif fam == "b":
            for s in range(1, L + 1):
                cols.append((f"b({s})", lambda T, U, s=s: T.b[s].ravel()))
        elif fam in ("wb", "wb_noL", "wb_L"):
            pairs = wb_indices(L)
            if fam == "wb_noL":
                pairs = [(s, t) for s, t in pairs if s < L]
            if fam == "wb_L":
                pairs = [(s, t) for s, t in pairs if s == L]
            for s, t in pairs:
                cols.append(
                    (f"Wb({s},{t})", lambda T, U, s=s, t=t: T.wb[(s, t)].ravel())
                )
        elif fam == "bw":
            for s, t in psi_indices(L):
                cols.append(
                    (f"bW({s})(L,{t})", lambda T, U, s=s, t=t: T.bw[(s, t)].ravel())
                )
        elif fam == "bw_diag":
            for t in range(1, L):
                cols.append(
                    (
                        f"bW({t})(L,{t})",
                        lambda T, U, t=t: T.bw[(t, t)].ravel(),
                    )
                )
        elif fam == "ww":
            for s, t in psi_indices(L):
                cols.append(
                    (f"WW({s},0)(L,{t})", lambda T, U, s=s, t=t: T.ww[(s, t)].ravel())
                )
        elif fam == "ww_diag":
            for s in range(1, L):
                cols.append(
                    (
                        f"WW({s},0)(L,{s})",
                        lambda T, U, s=s: T.ww[(s, s)].ravel(),
                    )
                )
        elif fam == "eq17":
            cols.append(("eq17", None))
        elif fam == "const":
            cols.append(("1", lambda T, U: np.ones(1)))
    return cols


def feature_labels(spec: WeightSpec, families: Sequence[str], psi: PsiParams) -> list[str]:
    """Column labels of the design matrix, one per scalar feature."""
    U = WeightObject.zeros(spec)
    row, labels = _feature_row(spec, U, psi, families, want_labels=True)
    return labels


def _feature_row(spec, U, psi, families, want_labels=False):
    cols = _family_columns(spec, families)
    terms = all_terms(U, psi)
    values = []
    labels = []
    for label, fn in cols:
        if fn is None:
            vec = featurize(U, psi)
            values.append(vec)
            if want_labels:
                labels.extend(f"eq17[{i}]" for i in range(vec.size))
            continue
        vec = np.asarray(fn(terms, U), dtype=np.float64)
        values.append(vec)
        if want_labels:
            if vec.size == 1:
                labels.append(label)
            else:
                labels.extend(f"{label}[{i}]" for i in range(vec.size))
    row = np.concatenate(values) if values else np.zeros(0)
    return row, labels


def feature_design_matrix(
    spec: WeightSpec,
    psi: PsiParams,
    families: Sequence[str],
    samples: int,
    rng: Rng,
) -> np.ndarray:
    """Rows are the selected stable-term features of i.i.d. uniform(-1, 1)
    weight objects; needs at least as many samples as features."""
    probe = _feature_row(spec, WeightObject.zeros(spec), psi, families)[0]
    F = probe.size
    if samples < F:
        raise ValidationError(f"need samples >= F={F}, got {samples}")
    rows = []
    for k in range(samples):
        U = random_weights(spec, rng.child("design", k), Uniform(-1.0, 1.0))
        rows.append(_feature_row(spec, U, psi, families)[0])
    return np.stack(rows)


def _sigma_ratio(X: np.ndarray) -> float:
    if X.shape[1] == 0:
        return 1.0
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[0] == 0.0:
        return 0.0
    return float(sv[-1] / sv[0])


def independence_report(
    spec: WeightSpec,
    psi: PsiParams,
    rng: Rng,
    threshold: float = RANK_THRESHOLD,
    oversample: int = OVERSAMPLE,
) -> dict:
    """Numerical independence/degeneracy report for the stable-term families.

    The families asserted independent (all ``[W]^(s,t)`` except ``(L,0)``,
    all biases, all ``[Wb]`` with ``s < L``, and the constant) must give a
    full-rank design matrix for generic connection matrices.  The coupled
    pairs ``{[W]^(L,0), [WW]^(s,0)(L,s)}`` and ``{[Wb]^(L,t)(t),
    [bW]^(t)(L,t)}`` carry structural trace relations for *every*
    connection matrix (``sum_p [WW]^(s,0)(L,s)_pp`` is a fixed linear
    combination of ``[W]^(L,0)`` entries, and ``sum_p [bW]^(t)(L,t)_pp``
    one of ``[Wb]^(L,t)(t)`` entries), so their rank is reported rather
    than asserted; with degenerate widths and collapsing connection
    matrices the deficiency deepens to entrywise column equality.  Exact
    zero columns (vanishing connection matrices) are flagged as well.
    """

    def check(families):
        F = _feature_row(spec, WeightObject.zeros(spec), psi, families)[0].size
        X = feature_design_matrix(spec, psi, families, oversample * F, rng)
        ratio = _sigma_ratio(X)
        return F, ratio

    report: dict = {
        "spec": {"L": spec.L, "n": list(spec.n), "d": spec.d},
        "threshold": threshold,
        "oversample": oversample,
    }
    asserted = ["w_noL0", "b", "wb_noL", "const"]
    F, ratio = check(asserted)
    report["asserted_independent"] = {
        "families": asserted,
        "features": F,
        "sigma_ratio": ratio,
        "full_rank": bool(ratio >= threshold),
    }
    coupled = []
    degeneracies = []
    for fams, tag in (
        (["w_L0", "ww_diag"], "W(L,0)/WW(s,0)(L,s)"),
        (["wb_L", "bw_diag"], "Wb(L,t)(t)/bW(t)(L,t)"),
    ):
        F, ratio = check(fams)
        deficient = bool(ratio < threshold)
        coupled.append(
            {
                "families": fams,
                "features": F,
                "sigma_ratio": ratio,
                "deficient": deficient,
            }
        )
        if deficient:
            degeneracies.append(f"rank-deficient coupled family {tag}")
    report["coupled"] = coupled

    zero_labels = []
    sample = random_weights(spec, rng.child("zero-check"), Uniform(-1.0, 1.0))
    row, labels = _feature_row(spec, sample, psi, ["bw", "ww"], want_labels=True)
    rows = [row]
    for k in range(2):
        U = random_weights(spec, rng.child("zero-check", k), Uniform(-1.0, 1.0))
        rows.append(_feature_row(spec, U, psi, ["bw", "ww"])[0])
    stacked = np.stack(rows)
    for idx in np.nonzero(~stacked.any(axis=0))[0]:
        zero_labels.append(labels[int(idx)])
    report["zero_columns"] = zero_labels
    if zero_labels:
        degeneracies.append("exactly-zero bW/WW columns (vanishing connection matrix)")
    report["degeneracies"] = degeneracies
    return report
