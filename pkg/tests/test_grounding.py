import numpy as np
import pytest

from evidence_select import grounding
from evidence_select.errors import ContractError
from evidence_select.grounding import GroundingParams
from evidence_select.oracles import numerical_gradient, relative_error
from evidence_select.synthbag import AnchorBank, gram_schmidt


def make_params(gen, d=6, rank=2, bridge_input="raw"):
    return GroundingParams(
        U=gen.normal(0.0, 0.3, (d, rank)),
        V=gen.normal(0.0, 0.3, (d, rank)),
        B=np.eye(d) + gen.normal(0.0, 0.2, (d, d)),
        bridge_input=bridge_input,
    )


def make_bank(gen, m=3, d=6):
    return AnchorBank(anchors=gram_schmidt(gen.standard_normal((m, d))), names=[f"a{i}" for i in range(m)])


def test_identity_adapter_normalizes_rows(gen):
    params = grounding.init_params(5, 5, seed=0, rank=2)
    H = gen.normal(size=(4, 5))
    out = grounding.adapt(params, H)
    assert np.allclose(out.E, H / np.linalg.norm(H, axis=1, keepdims=True))
    assert not out.degenerate.any()


def test_zero_row_is_flagged_degenerate(gen):
    params = make_params(gen)
    H = gen.normal(size=(3, 6))
    H[1] = 0.0
    out = grounding.adapt(params, H)
    assert out.degenerate.tolist() == [False, True, False]
    assert np.all(out.E[1] == 0.0)


def test_adapt_rejects_nonfinite(gen):
    params = make_params(gen)
    H = gen.normal(size=(2, 6))
    H[0, 0] = np.inf
    with pytest.raises(ContractError):
        grounding.adapt(params, H)


def test_responses_lie_in_unit_interval(gen):
    params = make_params(gen)
    bank = make_bank(gen)
    R = grounding.anchor_responses(params, gen.normal(size=(5, 6)), bank).R
    assert R.shape == (5, 3)
    assert np.all((R > 0.0) & (R < 1.0))


def test_response_on_aligned_patch(gen):
    params = grounding.init_params(6, 6, seed=0)
    bank = make_bank(gen)
    out = grounding.anchor_responses(params, bank.anchors[:1] * 3.0, bank)
    expected = 1.0 / (1.0 + np.exp(-params.gamma * (1.0 - params.delta)))
    assert out.R[0, 0] == pytest.approx(expected)


def test_zero_bridge_input_has_zero_cosine(gen):
    params = make_params(gen)
    bank = make_bank(gen)
    out = grounding.anchor_responses(params, np.zeros((1, 6)), bank)
    assert np.all(out.cosine == 0.0)


def test_bridge_dim_mismatch(gen):
    params = make_params(gen)
    bank = make_bank(gen, d=4)
    with pytest.raises(ContractError):
        grounding.anchor_responses(params, gen.normal(size=(2, 6)), bank)


def test_adapter_gradients_match_finite_differences(gen):
    params = make_params(gen)
    H = gen.normal(size=(4, 6))
    weights = gen.normal(size=(4, 6))

    def loss():
        return float(np.sum(weights * grounding.adapt(params, H).E))

    adapted = grounding.adapt(params, H)
    grads = grounding.adapt_backward(params, H, adapted, weights)
    assert relative_error(grads["U"], numerical_gradient(loss, params.U)) < 1e-6
    assert relative_error(grads["V"], numerical_gradient(loss, params.V)) < 1e-6


def test_anchor_gradients_match_finite_differences(gen):
    params = make_params(gen)
    bank = make_bank(gen)
    Z = gen.normal(size=(4, 6))
    weights = gen.normal(size=(4, 3))

    def loss():
        return float(np.sum(weights * grounding.anchor_responses(params, Z, bank).R))

    result = grounding.anchor_responses(params, Z, bank)
    dB, dZ = grounding.anchor_backward(params, Z, bank, result, weights)
    assert relative_error(dB, numerical_gradient(loss, params.B)) < 1e-6
    assert relative_error(dZ, numerical_gradient(loss, Z)) < 1e-6


def test_bridge_source_follows_setting(gen):
    H = gen.normal(size=(3, 6))
    raw = make_params(gen)
    adapted = make_params(gen, bridge_input="adapted")
    assert np.array_equal(grounding.bridge_source(raw, H, grounding.adapt(raw, H)), H)
    result = grounding.adapt(adapted, H)
    assert grounding.bridge_source(adapted, H, result) is result.E


def test_project_bridge_renormalizes_only_when_constrained(gen):
    params = make_params(gen)
    params.B *= 3.0
    loose = GroundingParams(U=params.U, V=params.V, B=params.B.copy(), constrained=False)
    grounding.project_bridge(params)
    grounding.project_bridge(loose)
    assert np.allclose(np.linalg.norm(params.B, axis=1), 1.0)
    assert not np.allclose(np.linalg.norm(loose.B, axis=1), 1.0)


def test_init_validates_bridge_input():
    with pytest.raises(ContractError):
        grounding.init_params(4, 4, seed=0, bridge_input="sideways")
