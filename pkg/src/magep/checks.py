"""Property suites verifying the algebra end to end.

Each suite draws random instances from an architecture grid, measures the
worst relative residual of one identity, and reports it against a pinned
tolerance.  All randomness flows from one seed: trial k of suite ``name``
uses the stream ``Rng(seed).child(name, k)``, so any failure is replayable
from the report alone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import layers, monomial, netfunc, oracle
from .activations import abs_act, leaky_relu, relu, sin, tanh
from .dense import Rng, rel_residual
from .errors import ValidationError
from .monomial import VARIANT_POSITIVE, VARIANT_SIGN
from .stableterms import (
    PsiParams,
    all_terms,
    bw_term,
    psi_indices,
    w_chain,
    w_indices,
    wb_indices,
    wb_term,
    ww_term,
)
from .weightspace import Uniform, WeightObject, WeightSpec, random_weights

__all__ = ["Grid", "SUITE_NAMES", "DEFAULT_TOLERANCES", "run_suite", "run_suites", "run_bench"]

SUITE_NAMES = (
    "group",
    "stability",
    "chains",
    "netinv",
    "equiv",
    "inv",
    "stack",
    "oracle",
    "rank",
)

DEFAULT_TOLERANCES = {
    "group": 1e-12,      # action homomorphism; scale parts held to 1e-14
    "stability": 1e-10,
    "chains": 1e-12,
    "netinv": 1e-9,
    "equiv": 1e-9,
    "inv": 1e-9,
    "stack": 1e-8,
    "oracle": 1e-12,
    "rank": 1e-6,        # singular-value ratio lower bound
}

GROUP_SCALE_TOL = 1e-14
NETINV_WITNESS_FLOOR = 1e-3


@dataclass(frozen=True)
class Grid:
    """Architecture grid the suites draw from."""

    L_values: tuple[int, ...] = (2, 3, 4)
    n_max: int = 4
    d_values: tuple[int, ...] = (1, 2)
    e_values: tuple[int, ...] = (1, 3)
    scale_range: tuple[float, float] = monomial.DEFAULT_SCALE_RANGE

    def sample_spec(self, rng: Rng, d: int | None = None, n_min: int = 1) -> WeightSpec:
        L = rng.choice(self.L_values)
        n = tuple(int(rng.integers(n_min, self.n_max)) for _ in range(L + 1))
        return WeightSpec(L, n, d if d is not None else rng.choice(self.d_values))


def _variant_for(trial: int) -> str:
    return VARIANT_POSITIVE if trial % 2 == 0 else VARIANT_SIGN


def _left(m, arr):
    """g^(s) acting on the second-to-last axis of a term."""
    return m.apply_rows(arr)


def _left_vec(m, arr):
    """g^(s) acting on the last axis of a bias-like term."""
    return m.apply_rows(arr[..., None])[..., 0]


def _right_inv(m, arr):
    """(g^(t))^{-1} acting on the last axis of a term."""
    return m.apply_cols_inverse(arr)


# ---------------------------------------------------------------------------
# Suites


def _suite_group(trials, rng, grid, tol):
    worst_action = 0.0
    worst_scale = 0.0
    perm_exact = True
    for k in range(trials):
        r = rng.child("group", k)
        variant = _variant_for(k)
        spec = grid.sample_spec(r.child("spec"))
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
        g = monomial.sample(spec, r.child("g"), variant, grid.scale_range)
        h = monomial.sample(spec, r.child("h"), variant, grid.scale_range)

        gid = monomial.identity(spec, variant)
        if not monomial.act(gid, U).equal(U):
            perm_exact = False
        unit = monomial.compose(g, monomial.invert(g))
        for m in unit.layers:
            if not np.array_equal(m.perm, np.arange(m.n)):
                perm_exact = False
            worst_scale = max(worst_scale, float(np.max(np.abs(m.scales - 1.0))))
        gh = monomial.compose(g, h)
        lhs = monomial.act(gh, U)
        rhs = monomial.act(g, monomial.act(h, U))
        for a, b in zip(lhs.W + lhs.b, rhs.W + rhs.b):
            worst_action = max(worst_action, rel_residual(a, b))
        round_trip = monomial.act(unit, U)
        for a, b in zip(round_trip.W + round_trip.b, U.W + U.b):
            worst_action = max(worst_action, rel_residual(a, b))
    ok = perm_exact and worst_scale <= GROUP_SCALE_TOL and worst_action <= tol
    return {
        "suite": "group",
        "trials": trials,
        "max_residual": worst_action,
        "tolerance": tol,
        "pass": bool(ok),
        "details": {
            "perm_parts_exact": perm_exact,
            "max_scale_residual": worst_scale,
            "scale_tolerance": GROUP_SCALE_TOL,
        },
    }


def _suite_stability(trials, rng, grid, tol):
    worst = 0.0
    for k in range(trials):
        r = rng.child("stability", k)
        variant = _variant_for(k)
        spec = grid.sample_spec(r.child("spec"))
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
        psi = PsiParams.random(spec, r.child("psi"))
        g = monomial.sample(spec, r.child("g"), variant, grid.scale_range)
        gU = monomial.act(g, U)
        L = spec.L
        for s, t in w_indices(L):
            got = w_chain(gU, s, t)
            want = _right_inv(g.layer(t), _left(g.layer(s), w_chain(U, s, t)))
            worst = max(worst, rel_residual(got, want))
        for s in range(1, L + 1):
            worst = max(
                worst, rel_residual(gU.bias(s), _left_vec(g.layer(s), U.bias(s)))
            )
        for s, t in wb_indices(L):
            got = wb_term(gU, s, t)
            want = _left_vec(g.layer(s), wb_term(U, s, t))
            worst = max(worst, rel_residual(got, want))
        for s, t in psi_indices(L):
            got = bw_term(gU, s, t, psi)
            want = _right_inv(g.layer(t), _left(g.layer(s), bw_term(U, s, t, psi)))
            worst = max(worst, rel_residual(got, want))
            got = ww_term(gU, s, t, psi)
            want = _right_inv(g.layer(t), _left(g.layer(s), ww_term(U, s, t, psi)))
            worst = max(worst, rel_residual(got, want))
    return {
        "suite": "stability",
        "trials": trials,
        "max_residual": worst,
        "tolerance": tol,
        "pass": bool(worst <= tol),
        "details": {},
    }


def _suite_chains(trials, rng, grid, tol):
    worst = 0.0
    exact_specialization = True
    for k in range(trials):
        r = rng.child("chains", k)
        spec = grid.sample_spec(r.child("spec"))
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
        L = spec.L
        for s in range(1, L + 1):
            if not np.array_equal(w_chain(U, s, s - 1), U.weight(s)):
                exact_specialization = False
        for s in range(2, L + 1):
            for t in range(1, s):
                for rr in range(t):
                    got = np.matmul(w_chain(U, s, t), w_chain(U, t, rr))
                    worst = max(worst, rel_residual(got, w_chain(U, s, rr)))
                    if rr >= 1:
                        got = np.matmul(
                            w_chain(U, s, t), wb_term(U, t, rr)[..., None]
                        )[..., 0]
                        worst = max(worst, rel_residual(got, wb_term(U, s, rr)))
                    row = r.child("psirow", s, t, rr).uniform(-1.0, 1.0, (1, spec.n[s]))
                    got = np.matmul(bw_term(U, s, t, row, upper=s), w_chain(U, t, rr))
                    want = bw_term(U, s, rr, row, upper=s)
                    worst = max(worst, rel_residual(got, want))
    return {
        "suite": "chains",
        "trials": trials,
        "max_residual": worst,
        "tolerance": tol,
        "pass": bool(worst <= tol and exact_specialization),
        "details": {"one_step_chain_exact": exact_specialization},
    }


_NETINV_PAIRS = (
    (relu, VARIANT_POSITIVE),
    (leaky_relu(0.2), VARIANT_POSITIVE),
    (tanh, VARIANT_SIGN),
    (sin, VARIANT_SIGN),
)


def _suite_netinv(trials, rng, grid, tol):
    worst = 0.0
    for k in range(trials):
        r = rng.child("netinv", k)
        act, variant = _NETINV_PAIRS[k % len(_NETINV_PAIRS)]
        spec = grid.sample_spec(r.child("spec"), d=1)
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
        g = monomial.sample(spec, r.child("g"), variant, grid.scale_range)
        x = r.child("x").uniform(-1.0, 1.0, spec.n[0])
        worst = max(
            worst,
            rel_residual(
                netfunc.mlp_forward(U, x, act),
                netfunc.mlp_forward(monomial.act(g, U), x, act),
            ),
        )
    # Vacuity guard: a mismatched activation/variant pair must visibly break
    # the invariance on at least one instance.
    witness = 0.0
    for k in range(50):
        r = rng.child("netinv-witness", k)
        spec = grid.sample_spec(r.child("spec"), d=1, n_min=2)
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
        g = monomial.sample(spec, r.child("g"), VARIANT_SIGN, grid.scale_range)
        if all(np.all(m.scales == 1.0) for m in g.layers):
            continue
        x = r.child("x").uniform(-1.0, 1.0, spec.n[0])
        witness = max(
            witness,
            rel_residual(
                netfunc.mlp_forward(U, x, relu),
                netfunc.mlp_forward(monomial.act(g, U), x, relu),
            ),
        )
        if witness > NETINV_WITNESS_FLOOR:
            break
    ok = worst <= tol and witness > NETINV_WITNESS_FLOOR
    return {
        "suite": "netinv",
        "trials": trials,
        "max_residual": worst,
        "tolerance": tol,
        "pass": bool(ok),
        "details": {
            "mismatch_witness_residual": witness,
            "witness_floor": NETINV_WITNESS_FLOOR,
        },
    }


def _act_on_output(g, out):
    """Apply a group element to an e-channel weight object (the action is
    channel-independent, so the same element works on any channel count)."""
    return monomial.act_layers(g.layers, out)


def _force_hidden_swap(g, variant):
    """Ensure the layer-1 permutation is nontrivial (needs n_1 >= 2)."""
    m = g.layer(1)
    if not np.array_equal(m.perm, np.arange(m.n)):
        return g
    swapped = np.arange(m.n)
    swapped[[0, 1]] = swapped[[1, 0]]
    layers_ = list(g.layers)
    layers_[1] = monomial.MonomialElement(m.scales, swapped)
    return monomial.GroupElement(variant, tuple(layers_))


def _corrupt_equivariant(params, U, out):
    """Emulate one broken sharing constraint: the first-layer weight-row
    coefficient acquires a row dependence it is not allowed to have."""
    terms = all_terms(U, params.psi)
    w10 = terms.w[(1, 0)]
    weights = np.arange(1, U.spec.n[1] + 1, dtype=np.float64)
    rogue = np.einsum("...djq,j->...j", w10, weights)
    W = list(out.W)
    W[0] = W[0] + 0.1 * rogue[..., None, :, None]
    return WeightObject(out.spec, tuple(W), tuple(out.b), out.batch)


def _suite_equiv(trials, rng, grid, tol, mutate_sharing=False):
    worst = 0.0
    for k in range(trials):
        r = rng.child("equiv", k)
        variant = _variant_for(k)
        n_min = 2 if mutate_sharing else 1
        spec = grid.sample_spec(r.child("spec"), n_min=n_min)
        e = r.child("e").choice(grid.e_values)
        params = layers.init_equivariant(spec, e, r.child("params"))
        batch = 2 if k % 3 == 0 else None
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0), batch=batch)
        g = monomial.sample(spec, r.child("g"), variant, grid.scale_range)
        if mutate_sharing:
            g = _force_hidden_swap(g, variant)
        out_U = layers.equivariant_forward(params, U)
        out_gU = layers.equivariant_forward(params, monomial.act(g, U))
        if mutate_sharing:
            out_U = _corrupt_equivariant(params, U, out_U)
            out_gU = _corrupt_equivariant(params, monomial.act(g, U), out_gU)
        want = _act_on_output(g, out_U)
        for a, b in zip(out_gU.W + out_gU.b, want.W + want.b):
            worst = max(worst, rel_residual(a, b))
    return {
        "suite": "equiv",
        "trials": trials,
        "max_residual": worst,
        "tolerance": tol,
        "pass": bool(worst <= tol),
        "details": {"sharing_mutation": bool(mutate_sharing)},
    }


def _suite_inv(trials, rng, grid, tol):
    worst = 0.0
    for k in range(trials):
        r = rng.child("inv", k)
        variant = _variant_for(k)
        spec = grid.sample_spec(r.child("spec"))
        e = r.child("e").choice(grid.e_values)
        params = layers.init_invariant(spec, e, 3, r.child("params"))
        batch = 2 if k % 3 == 0 else None
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0), batch=batch)
        g = monomial.sample(spec, r.child("g"), variant, grid.scale_range)
        worst = max(
            worst,
            rel_residual(
                layers.invariant_forward(params, monomial.act(g, U)),
                layers.invariant_forward(params, U),
            ),
        )
    return {
        "suite": "inv",
        "trials": trials,
        "max_residual": worst,
        "tolerance": tol,
        "pass": bool(worst <= tol),
        "details": {},
    }


_STACK_PAIRS = (
    (relu, VARIANT_POSITIVE),
    (sin, VARIANT_SIGN),
    (abs_act, VARIANT_POSITIVE),
    (abs_act, VARIANT_SIGN),
)


def _suite_stack(trials, rng, grid, tol):
    worst = 0.0
    for k in range(trials):
        r = rng.child("stack", k)
        act, variant = _STACK_PAIRS[k % len(_STACK_PAIRS)]
        spec = grid.sample_spec(r.child("spec"))
        re = r.child("e")
        e1 = re.choice(grid.e_values)
        e2 = re.choice(grid.e_values)
        p1 = layers.init_equivariant(spec, e1, r.child("p1"))
        spec2 = WeightSpec(spec.L, spec.n, e1)
        p2 = layers.init_equivariant(spec2, e2, r.child("p2"))
        head = layers.init_invariant(WeightSpec(spec.L, spec.n, e2), 2, 3, r.child("head"))
        stack = [(p1, act), (p2, act)]
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
        g = monomial.sample(spec, r.child("g"), variant, grid.scale_range)
        worst = max(
            worst,
            rel_residual(
                layers.stack_forward(stack, head, monomial.act(g, U), variant),
                layers.stack_forward(stack, head, U, variant),
            ),
        )
    return {
        "suite": "stack",
        "trials": trials,
        "max_residual": worst,
        "tolerance": tol,
        "pass": bool(worst <= tol),
        "details": {},
    }


def _suite_oracle(trials, rng, grid, tol):
    worst = 0.0
    for k in range(trials):
        r = rng.child("oracle", k)
        spec = grid.sample_spec(r.child("spec"))
        e = r.child("e").choice(grid.e_values)
        eq = layers.init_equivariant(spec, e, r.child("eq"))
        inv = layers.init_invariant(spec, e, 2, r.child("inv"))
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
        fast = layers.equivariant_forward(eq, U)
        slow = oracle.naive_equivariant_forward(eq, U)
        for a, b in zip(fast.W + fast.b, slow.W + slow.b):
            worst = max(worst, rel_residual(a, b))
        worst = max(
            worst,
            rel_residual(
                layers.invariant_forward(inv, U), oracle.naive_invariant_forward(inv, U)
            ),
        )
    return {
        "suite": "oracle",
        "trials": trials,
        "max_residual": worst,
        "tolerance": tol,
        "pass": bool(worst <= tol),
        "details": {},
    }


def _suite_rank(trials, rng, grid, tol, collapse_psi=False):
    """Full rank of the asserted-independent families at generic connection
    matrices, and detection of the known width-1 collapse witness."""
    specs = min(max(trials // 20, 3), 10)
    worst_ratio = 1.0
    all_full = True
    reports = []
    for k in range(specs):
        r = rng.child("rank", k)
        L = 2 + (k % 2)
        rn = r.child("n")
        n = tuple(int(rn.integers(1, 3)) for _ in range(L + 1))
        spec = WeightSpec(L, n, 1)
        psi = (
            PsiParams.constant(spec, 1.0)
            if collapse_psi
            else PsiParams.random(spec, r.child("psi"))
        )
        rep = oracle.independence_report(spec, psi, r.child("report"), threshold=tol)
        reports.append(rep)
        worst_ratio = min(worst_ratio, rep["asserted_independent"]["sigma_ratio"])
        all_full = all_full and rep["asserted_independent"]["full_rank"]
    witness_spec = WeightSpec(2, (1, 1, 1), 1)
    witness = oracle.independence_report(
        witness_spec,
        PsiParams.constant(witness_spec, 1.0),
        rng.child("rank-witness"),
        threshold=tol,
    )
    witness_deficient = any(c["deficient"] for c in witness["coupled"])
    if collapse_psi:
        detected = witness_deficient or any(
            c["deficient"] for rep in reports for c in rep["coupled"]
        )
        ok = all_full and detected
    else:
        ok = all_full and witness_deficient
    return {
        "suite": "rank",
        "trials": specs,
        "max_residual": worst_ratio,  # smallest sigma ratio seen
        "tolerance": tol,
        "pass": bool(ok),
        "details": {
            "asserted_full_rank": all_full,
            "witness_deficient": witness_deficient,
            "collapse_psi": bool(collapse_psi),
            "reports": reports + [witness],
        },
    }


_SUITE_FNS = {
    "group": _suite_group,
    "stability": _suite_stability,
    "chains": _suite_chains,
    "netinv": _suite_netinv,
    "equiv": _suite_equiv,
    "inv": _suite_inv,
    "stack": _suite_stack,
    "oracle": _suite_oracle,
    "rank": _suite_rank,
}


def run_suite(
    name: str,
    trials: int,
    seed: int,
    grid: Grid | None = None,
    tolerance: float | None = None,
    mutate_sharing: bool = False,
    collapse_psi: bool = False,
) -> dict:
    if name not in _SUITE_FNS:
        raise ValidationError(f"unknown suite {name!r}")
    grid = grid or Grid()
    tol = DEFAULT_TOLERANCES[name] if tolerance is None else tolerance
    rng = Rng(seed)
    kwargs = {}
    if name == "equiv":
        kwargs["mutate_sharing"] = mutate_sharing
    if name == "rank":
        kwargs["collapse_psi"] = collapse_psi
    return _SUITE_FNS[name](trials, rng, grid, tol, **kwargs)


def run_suites(
    selector: str,
    trials: int,
    seed: int,
    grid: Grid | None = None,
    tolerance_overrides: dict[str, float] | None = None,
    mutate_sharing: bool = False,
    collapse_psi: bool = False,
) -> dict:
    """Run one suite or all of them; returns the full JSON-ready report."""
    names = SUITE_NAMES if selector == "all" else (selector,)
    overrides = tolerance_overrides or {}
    records = []
    for name in names:
        try:
            records.append(
                run_suite(
                    name,
                    trials,
                    seed,
                    grid,
                    overrides.get(name),
                    mutate_sharing=mutate_sharing,
                    collapse_psi=collapse_psi,
                )
            )
        except Exception as exc:  # partial report still emitted
            records.append(
                {
                    "suite": name,
                    "trials": trials,
                    "max_residual": None,
                    "tolerance": overrides.get(name, DEFAULT_TOLERANCES[name]),
                    "pass": False,
                    "details": {"error": f"{type(exc).__name__}: {exc}"},
                }
            )
    return {
        "format": "report/1",
        "command": "check",
        "seed": seed,
        "trials": trials,
        "suites": records,
        "pass": bool(all(rec["pass"] for rec in records)),
    }


def run_bench(reps: int, seed: int, grid: Grid | None = None, batch: int = 8) -> dict:
    """Median wall-clock time per batched forward, einsum path vs naive loops.

    ``batch`` rows are evaluated per call: that is the workload the
    contraction path exists for (the loops scale linearly in it).
    """
    grid = grid or Grid()
    rng = Rng(seed)
    rows = []
    for L in grid.L_values:
        n = tuple([3] * (L + 1))
        for d in grid.d_values:
            spec = WeightSpec(L, n, d)
            e = max(grid.e_values)
            params = layers.init_equivariant(spec, e, rng.child("bench", L, d))
            U = random_weights(
                spec, rng.child("bench-U", L, d), Uniform(-1.0, 1.0), batch=batch
            )

            def timed(fn):
                samples = []
                for _ in range(max(reps, 1)):
                    t0 = time.perf_counter()
                    fn(params, U)
                    samples.append(time.perf_counter() - t0)
                return float(np.median(samples))

            rows.append(
                {
                    "L": L,
                    "n": list(n),
                    "d": d,
                    "e": e,
                    "batch": batch,
                    "reps": reps,
                    "optimized_s": timed(layers.equivariant_forward),
                    "naive_s": timed(oracle.naive_equivariant_forward),
                }
            )
    return {"format": "report/1", "command": "bench", "seed": seed, "rows": rows}
