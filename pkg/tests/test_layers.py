import numpy as np
import pytest

from magep import layers, monomial, oracle
from magep.activations import abs_act, relu, sin, tanh
from magep.dense import Rng, rel_residual
from magep.errors import ConfigurationError, ValidationError
from magep.stableterms import PsiParams
from magep.weightspace import Uniform, WeightObject, WeightSpec, random_weights


def _random_setup(seed, L=3, n=(2, 3, 2, 2), d=2, e=3):
    spec = WeightSpec(L, n, d)
    r = Rng(seed)
    params = layers.init_equivariant(spec, e, r.child("p"))
    U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
    return spec, params, U


def _ones_equivariant(spec):
    e, d, n0, nL, L = 1, spec.d, spec.n[0], spec.n[spec.L], spec.L
    ones = np.ones
    return layers.EquivariantParams(
        spec=spec,
        e=e,
        phiW_L_W=ones((e, d, nL, nL)),
        phiW_L_WW=ones((e, d, nL, nL)),
        phiW_L_bW=ones((e, d, nL, nL)),
        phib_L_WWLL=ones((e, d, nL, n0, nL)),
        phib_L_WL0=ones((e, d, nL, n0, nL)),
        phib_L_bWLL0=ones((e, d, nL, n0, nL)),
        phib_L_trWW={s: ones((e, d, nL)) for s in range(1, L)},
        phib_L_Wb={t: ones((e, d, nL, nL)) for t in range(1, L)},
        phib_L_trbW={t: ones((e, d, nL)) for t in range(1, L)},
        phib_L_b=ones((e, d, nL, nL)),
        phib_L_1=ones((e, nL)),
        phiW_1_W=ones((d, e, n0, n0)),
        phiW_1_WW=ones((d, e, n0, n0)),
        phiW_1_bW=ones((d, e, n0, n0)),
        phiW_1_b=ones((d, e, n0)),
        phib_1_W=ones((d, e, n0)),
        phib_1_WW=ones((d, e, n0)),
        phib_1_bW=ones((d, e, n0)),
        phib_1_b=ones((d, e)),
        mid={
            i: layers.MiddleBlocks(
                w=ones((d, e)),
                ww=ones((d, e)),
                bw=ones((d, e)),
                b_w=ones((d, e, n0)),
                b_ww=ones((d, e, n0)),
                b_bw=ones((d, e, n0)),
                b_wb={t: ones((d, e)) for t in range(1, i)},
                b_b=ones((d, e)),
            )
            for i in range(2, L)
        },
        psi=PsiParams.constant(spec, 1.0),
    )


def test_all_ones_scalar_network_regression_values():
    # every weight, bias, coefficient and connection entry equal to one on
    # the width-1 two-layer architecture; values pinned from the naive
    # summation oracle (and checkable by hand).
    spec = WeightSpec(2, (1, 1, 1), 1)
    U = WeightObject(
        spec,
        (np.ones((1, 1, 1)), np.ones((1, 1, 1))),
        (np.ones((1, 1)), np.ones((1, 1))),
    )
    params = _ones_equivariant(spec)
    out = layers.equivariant_forward(params, U)
    slow = oracle.naive_equivariant_forward(params, U)
    for a, b in zip(out.W + out.b, slow.W + slow.b):
        assert np.allclose(a, b, atol=1e-15)
    assert out.weight(1).item() == pytest.approx(4.0)
    assert out.bias(1).item() == pytest.approx(4.0)
    assert out.weight(2).item() == pytest.approx(3.0)
    assert out.bias(2).item() == pytest.approx(8.0)


def test_zero_object_gives_constant_row_only():
    spec, params, _ = _random_setup(1)
    out = layers.equivariant_forward(params, WeightObject.zeros(spec))
    for i in range(1, spec.L + 1):
        assert np.all(out.weight(i) == 0.0)
    for i in range(1, spec.L):
        assert np.all(out.bias(i) == 0.0)
    assert np.allclose(out.bias(spec.L), np.broadcast_to(params.phib_L_1, out.bias(spec.L).shape))


def test_zero_scale_init_forward_is_bias_only():
    spec = WeightSpec(2, (2, 2, 2), 1)
    params = layers.init_equivariant(spec, 2, Rng(5), scale=0.0)
    U = random_weights(spec, Rng(6), Uniform(-1.0, 1.0))
    out = layers.equivariant_forward(params, U)
    for i in range(1, spec.L + 1):
        assert np.all(out.weight(i) == 0.0)
    assert np.all(out.bias(1) == 0.0)
    assert np.all(out.bias(2) == 0.0)  # phib_L_1 is also drawn from (-0, 0)


def test_init_deterministic():
    spec = WeightSpec(3, (1, 2, 3, 1), 2)
    a = layers.init_equivariant(spec, 2, Rng(9))
    b = layers.init_equivariant(spec, 2, Rng(9))
    for k, v in a.blocks().items():
        assert np.array_equal(v, b.blocks()[k]), k


def test_middle_case_block_count_for_three_layers():
    spec = WeightSpec(3, (2, 2, 2, 2), 1)
    params = layers.init_equivariant(spec, 1, Rng(0))
    blk = params.mid[2]
    names = ["w", "ww", "bw", "b_w", "b_ww", "b_bw", "b_b"]
    assert len(names) + len(blk.b_wb) == 8  # 3 + 3 + 1 (t=1) + 1


def test_equivariance_small_dims():
    worst = 0.0
    for k in range(40):
        r = Rng(3000 + k)
        variant = "positive" if k % 2 == 0 else "sign"
        L = int(r.child("L").integers(2, 4))
        n = tuple(int(v) for v in r.child("n").integers(1, 3, L + 1))
        spec = WeightSpec(L, n, int(r.child("d").integers(1, 2)))
        params = layers.init_equivariant(spec, int(r.child("e").integers(1, 3)), r.child("p"))
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
        g = monomial.sample(spec, r.child("g"), variant)
        lhs = layers.equivariant_forward(params, monomial.act(g, U))
        rhs = monomial.act_layers(g.layers, layers.equivariant_forward(params, U))
        worst = max(
            worst,
            max(rel_residual(a, b) for a, b in zip(lhs.W + lhs.b, rhs.W + rhs.b)),
        )
    assert worst <= 1e-10


def test_invariance_small_dims():
    worst = 0.0
    for k in range(40):
        r = Rng(4000 + k)
        variant = "positive" if k % 2 == 0 else "sign"
        L = int(r.child("L").integers(2, 4))
        n = tuple(int(v) for v in r.child("n").integers(1, 3, L + 1))
        spec = WeightSpec(L, n, int(r.child("d").integers(1, 2)))
        params = layers.init_invariant(spec, 2, 3, r.child("p"))
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
        g = monomial.sample(spec, r.child("g"), variant)
        worst = max(
            worst,
            rel_residual(
                layers.invariant_forward(params, monomial.act(g, U)),
                layers.invariant_forward(params, U),
            ),
        )
    assert worst <= 1e-10


def test_invariant_zero_object_is_constant_row():
    spec = WeightSpec(2, (2, 3, 2), 2)
    params = layers.init_invariant(spec, 2, 4, Rng(1))
    out = layers.invariant_forward(params, WeightObject.zeros(spec))
    assert np.array_equal(out, params.phi_1)


def test_invariant_linearity_in_phi():
    spec = WeightSpec(2, (2, 2, 2), 1)
    r = Rng(12)
    psi = PsiParams.random(spec, r.child("psi"))
    pa = layers.init_invariant(spec, 2, 3, r.child("a"), psi=psi)
    pb = layers.init_invariant(spec, 2, 3, r.child("b"), psi=psi)

    def add(x, y):
        return layers.InvariantParams(
            spec=spec,
            e=2,
            d_out=3,
            phi_WWLL=pa.phi_WWLL + pb.phi_WWLL,
            phi_WL0=pa.phi_WL0 + pb.phi_WL0,
            phi_trWW={k: pa.phi_trWW[k] + pb.phi_trWW[k] for k in pa.phi_trWW},
            phi_bWLL0=pa.phi_bWLL0 + pb.phi_bWLL0,
            phi_Wb={k: pa.phi_Wb[k] + pb.phi_Wb[k] for k in pa.phi_Wb},
            phi_trbW={k: pa.phi_trbW[k] + pb.phi_trbW[k] for k in pa.phi_trbW},
            phi_b=pa.phi_b + pb.phi_b,
            phi_1=pa.phi_1 + pb.phi_1,
            psi=psi,
        )

    U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
    combined = layers.invariant_forward(add(pa, pb), U)
    separate = layers.invariant_forward(pa, U) + layers.invariant_forward(pb, U)
    assert rel_residual(combined, separate) <= 1e-12


def test_activation_examples():
    spec = WeightSpec(2, (1, 2, 1), 1)
    negative = random_weights(spec, Rng(0), Uniform(-2.0, -1.0))
    zeroed = layers.activation(relu, negative)
    assert all(np.all(w == 0.0) for w in zeroed.W + zeroed.b)
    U = random_weights(spec, Rng(1), Uniform(-1.0, 1.0))
    minus = U.map(lambda x: -x)
    a = layers.activation(tanh, minus)
    b = layers.activation(tanh, U).map(lambda x: -x)
    assert a.allclose(b, atol=1e-15)


def test_relu_commutes_with_positive_action_entrywise():
    spec = WeightSpec(3, (2, 2, 2, 2), 1)
    for k in range(10):
        r = Rng(5000 + k)
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
        g = monomial.sample(spec, r.child("g"), "positive")
        a = layers.activation(relu, monomial.act(g, U))
        b = monomial.act(g, layers.activation(relu, U))
        worst = max(rel_residual(x, y) for x, y in zip(a.W + a.b, b.W + b.b))
        assert worst <= 1e-14


def test_stack_empty_list_is_invariant_head():
    spec = WeightSpec(2, (2, 2, 2), 1)
    head = layers.init_invariant(spec, 2, 3, Rng(0))
    U = random_weights(spec, Rng(1))
    assert np.array_equal(
        layers.stack_forward([], head, U), layers.invariant_forward(head, U)
    )


def test_stack_two_layer_invariance():
    worst = 0.0
    for k, (act, variant) in enumerate([(relu, "positive"), (sin, "sign"), (abs_act, "sign")]):
        r = Rng(6000 + k)
        spec = WeightSpec(2, (2, 3, 2), 1)
        p1 = layers.init_equivariant(spec, 2, r.child("p1"))
        p2 = layers.init_equivariant(WeightSpec(2, spec.n, 2), 3, r.child("p2"))
        head = layers.init_invariant(WeightSpec(2, spec.n, 3), 2, 3, r.child("h"))
        U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
        g = monomial.sample(spec, r.child("g"), variant)
        worst = max(
            worst,
            rel_residual(
                layers.stack_forward([(p1, act), (p2, act)], head, monomial.act(g, U), variant),
                layers.stack_forward([(p1, act), (p2, act)], head, U, variant),
            ),
        )
    assert worst <= 1e-8


def test_stack_rejects_incompatible_activation():
    spec = WeightSpec(2, (2, 2, 2), 1)
    p1 = layers.init_equivariant(spec, 2, Rng(0))
    head = layers.init_invariant(WeightSpec(2, spec.n, 2), 2, 3, Rng(1))
    U = random_weights(spec, Rng(2))
    with pytest.raises(ConfigurationError, match="not compatible"):
        layers.stack_forward([(p1, relu)], head, U, variant="sign")


def test_stack_rejects_channel_mismatch():
    spec = WeightSpec(2, (2, 2, 2), 1)
    p1 = layers.init_equivariant(spec, 2, Rng(0))
    head = layers.init_invariant(WeightSpec(2, spec.n, 5), 2, 3, Rng(1))
    U = random_weights(spec, Rng(2))
    with pytest.raises(ConfigurationError, match="channels"):
        layers.stack_forward([(p1, relu)], head, U)


def test_parameter_count_matches_closed_form():
    for spec, e in [
        (WeightSpec(2, (1, 2, 1), 1), 1),
        (WeightSpec(3, (2, 3, 2, 2), 2), 3),
        (WeightSpec(4, (1, 2, 3, 2, 1), 1), 2),
    ]:
        params = layers.init_equivariant(spec, e, Rng(0))
        stored = sum(v.size for v in params.blocks().values())
        assert stored == layers.equivariant_parameter_count(spec, e)
        inv = layers.init_invariant(spec, e, 3, Rng(1))
        stored = sum(v.size for v in inv.blocks().values())
        assert stored == layers.invariant_parameter_count(spec, e, 3)


def test_no_dead_parameters_equivariant():
    # flipping any single stored coefficient must change the forward output
    spec = WeightSpec(3, (2, 2, 2, 2), 1)
    r = Rng(13)
    params = layers.init_equivariant(spec, 2, r.child("p"))
    U = random_weights(spec, r.child("U"), Uniform(0.5, 1.5))  # nonzero terms
    base = layers.equivariant_forward(params, U)
    for name, arr in params.blocks().items():
        idx = tuple(0 for _ in arr.shape)
        arr[idx] += 1.0
        out = layers.equivariant_forward(params, U)
        changed = any(
            not np.array_equal(a, b) for a, b in zip(out.W + out.b, base.W + base.b)
        )
        arr[idx] -= 1.0
        assert changed, f"block {name} is dead"


def test_no_dead_parameters_invariant():
    spec = WeightSpec(3, (2, 2, 2, 2), 1)
    r = Rng(14)
    params = layers.init_invariant(spec, 2, 2, r.child("p"))
    U = random_weights(spec, r.child("U"), Uniform(0.5, 1.5))
    base = layers.invariant_forward(params, U)
    for name, arr in params.blocks().items():
        idx = tuple(0 for _ in arr.shape)
        arr[idx] += 1.0
        out = layers.invariant_forward(params, U)
        arr[idx] -= 1.0
        assert not np.array_equal(out, base), f"block {name} is dead"


def test_degenerate_widths_still_equivariant():
    spec = WeightSpec(3, (1, 1, 1, 1), 1)
    r = Rng(15)
    params = layers.init_equivariant(spec, 2, r.child("p"))
    U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0))
    g = monomial.sample(spec, r.child("g"))
    lhs = layers.equivariant_forward(params, monomial.act(g, U))
    rhs = monomial.act_layers(g.layers, layers.equivariant_forward(params, U))
    assert max(rel_residual(a, b) for a, b in zip(lhs.W + lhs.b, rhs.W + rhs.b)) <= 1e-10


def test_batched_forward_matches_per_row():
    spec = WeightSpec(2, (2, 3, 2), 2)
    r = Rng(16)
    params = layers.init_equivariant(spec, 2, r.child("p"))
    U = random_weights(spec, r.child("U"), Uniform(-1.0, 1.0), batch=3)
    out = layers.equivariant_forward(params, U)
    for row in range(3):
        single = WeightObject(spec, tuple(w[row] for w in U.W), tuple(b[row] for b in U.b))
        one = layers.equivariant_forward(params, single)
        for i in range(1, 3):
            assert np.allclose(out.weight(i)[row], one.weight(i), atol=1e-15)
            assert np.allclose(out.bias(i)[row], one.bias(i), atol=1e-15)


def test_params_round_trip_bit_exact(tmp_path):
    spec = WeightSpec(3, (2, 3, 2, 2), 2)
    params = layers.init_equivariant(spec, 3, Rng(21))
    path = tmp_path / "eq.mgp.json"
    layers.save_params(params, path)
    loaded = layers.load_params(path)
    assert isinstance(loaded, layers.EquivariantParams)
    for k, v in params.blocks().items():
        assert np.array_equal(v, loaded.blocks()[k]), k
    for key in params.psi.bw:
        assert np.array_equal(params.psi.bw[key], loaded.psi.bw[key])
        assert np.array_equal(params.psi.ww[key], loaded.psi.ww[key])

    inv = layers.init_invariant(spec, 2, 4, Rng(22))
    path = tmp_path / "inv.mgp.json"
    layers.save_params(inv, path)
    loaded = layers.load_params(path)
    assert isinstance(loaded, layers.InvariantParams)
    for k, v in inv.blocks().items():
        assert np.array_equal(v, loaded.blocks()[k]), k


def test_forward_rejects_wrong_spec():
    spec, params, _ = _random_setup(2)
    other = random_weights(WeightSpec(2, (2, 2, 2), 2), Rng(0))
    with pytest.raises(ValidationError):
        layers.equivariant_forward(params, other)
