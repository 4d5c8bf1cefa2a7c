import math

import numpy as np
import pytest

from ilstm.lstm import LstmParams
from ilstm.models import (
    EOS,
    DenseHead,
    ModelOne,
    ModelTwo,
    Responder,
    build_answer_vocab,
    condition_vector,
    model1_forward,
    model1_loss,
    model2_forward,
    model2_hidden,
    model2_loss,
    model2_loss_grad,
    responder_generate,
    responder_loss,
    responder_probs,
)
from ilstm.numerics import finite_diff_grad, make_rng, one_hot, relative_error


def _xs(rng, T=5, E=6):
    return rng.normal(size=(T, E))


def test_model1_output_is_distribution():
    rng = make_rng(0)
    m = ModelOne.init(4, 6, 6, rng)
    p = model1_forward(m, _xs(rng))
    assert p.shape == (6,) and abs(p.sum() - 1) < 1e-12 and (p >= 0).all()


def test_model1_zero_head_is_uniform():
    rng = make_rng(1)
    m = ModelOne(LstmParams(rng.normal(size=(16, 10)), rng.normal(size=16)), DenseHead.init(6, 4))
    np.testing.assert_allclose(model1_forward(m, _xs(rng)), np.full(6, 1 / 6), rtol=1e-15)
    assert model1_loss(m, _xs(rng), 3) == pytest.approx(math.log(6))


def test_model1_rejects_empty():
    m = ModelOne.init(3, 6, 6, make_rng(0))
    with pytest.raises(ValueError):
        model1_forward(m, np.zeros((0, 6)))


def test_model2_outputs():
    rng = make_rng(2)
    m = ModelTwo.init(4, 6, 6, 50, rng)
    main_p, sub_p = model2_forward(m, _xs(rng))
    assert main_p.shape == (6,) and sub_p.shape == (50,)
    assert abs(main_p.sum() - 1) < 1e-12 and abs(sub_p.sum() - 1) < 1e-12
    with pytest.raises(ValueError):
        model2_forward(m, np.zeros((0, 6)))


def test_model2_pad_is_zero_and_not_trainable():
    m = ModelTwo.init(4, 6, 6, 50, make_rng(3))
    np.testing.assert_array_equal(m.pad, np.zeros(6))
    assert not m.pad.flags.writeable
    assert all(p is not m.pad for p in m.parameters().values())
    assert set(m.parameters()) == {f"lstm.{n}" for n in ("W_f", "W_i", "W_c", "W_o", "b_f", "b_i", "b_c", "b_o")} | {
        "main_head.W", "main_head.b", "sub_head.W", "sub_head.b"
    }


def test_model2_pad_mechanism():
    rng = make_rng(4)
    m = ModelTwo.init(5, 6, 6, 50, rng)
    xs = _xs(rng)
    h_T, h_pad = model2_hidden(m, xs)
    h_T2, h_fresh = model2_hidden(m, xs, pad=np.zeros(6))
    np.testing.assert_array_equal(h_pad, h_fresh)
    np.testing.assert_array_equal(h_T, h_T2)
    _, h_other = model2_hidden(m, xs, pad=rng.normal(size=6))
    assert not np.array_equal(h_pad, h_other)


def test_model2_main_head_reads_last_question_step():
    rng = make_rng(5)
    m = ModelTwo.init(4, 6, 6, 50, rng)
    xs = _xs(rng)
    one = ModelOne(m.lstm, m.main_head)
    np.testing.assert_array_equal(model2_forward(m, xs)[0], model1_forward(one, xs))


def test_model2_loss_values():
    rng = make_rng(6)
    m = ModelTwo(LstmParams(rng.normal(size=(16, 10)), rng.normal(size=16)), DenseHead.init(6, 4), DenseHead.init(50, 4))
    assert model2_loss(m, _xs(rng), 0, 0) == pytest.approx(math.log(6) + math.log(50))
    assert math.log(6) + math.log(50) == pytest.approx(5.7038, abs=1e-4)
    # saturated heads that put all mass on the targets give zero loss
    m.main_head.b[...] = -800.0
    m.main_head.b[2] = 800.0
    m.sub_head.b[...] = -800.0
    m.sub_head.b[7] = 800.0
    assert model2_loss(m, _xs(rng), 2, 7) == 0.0


def test_model2_summed_gradient_is_sum_of_heads():
    rng = make_rng(7)
    m = ModelTwo.init(4, 5, 3, 5, rng)
    for p in m.parameters().values():
        p[...] = rng.normal(0, 0.5, p.shape)
    xs = rng.normal(size=(4, 5))
    _, grads = model2_loss_grad(m, xs, 1, 3)
    from ilstm.numerics import cross_entropy

    def head_loss(which):
        main_p, sub_p = model2_forward(m, xs)
        return cross_entropy(1, main_p) if which == "main" else cross_entropy(3, sub_p)

    W = m.lstm.W
    g_main = finite_diff_grad(lambda _: head_loss("main"), W)
    g_sub = finite_diff_grad(lambda _: head_loss("sub"), W)
    lstm_grad = np.concatenate([grads[f"lstm.W_{g}"] for g in "fico"])
    assert relative_error(lstm_grad, g_main + g_sub) < 1e-6


@pytest.mark.parametrize("kind", ["one", "two"])
def test_model_gradients_match_finite_differences(kind):
    rng = make_rng(8)
    m = ModelOne.init(5, 4, 3, rng) if kind == "one" else ModelTwo.init(5, 4, 3, 4, rng)
    for p in m.parameters().values():
        p[...] = rng.normal(0, 0.5, p.shape)

    class S:
        xs = rng.normal(size=(6, 4))
        main, fine = 2, 1

    _, grads = m.loss_and_grad(S)
    assert set(grads) == set(m.parameters())
    for name, p in m.parameters().items():
        num = finite_diff_grad(lambda _: m.loss_and_grad(S)[0], p)
        assert relative_error(grads[name], num) < 1e-4, name


def test_condition_vector():
    u = condition_vector(np.full(6, 1 / 6), np.full(50, 1 / 50))
    assert u.shape == (56,)
    np.testing.assert_array_equal(u[:6], np.full(6, 1 / 6))
    np.testing.assert_array_equal(u[6:], np.full(50, 1 / 50))
    two_hot = condition_vector(one_hot(3, 6), one_hot(10, 50))
    assert two_hot.sum() == 2 and two_hot[3] == 1 and two_hot[16] == 1


def _responder(rng, H=3, E=4, vocab_words=("alpha", "beta", "gamma")):
    vocab = build_answer_vocab([list(vocab_words)])
    return Responder.init(H, E, 56, vocab, rng)


def test_answer_vocab_and_encoding():
    vocab = build_answer_vocab([["north"], ["13", "north"]])
    assert vocab == (EOS, "13", "north")
    r = Responder.init(2, 3, 56, vocab, make_rng(0))
    assert r.encode_answer(["north", "13"]) == (2, 1)
    with pytest.raises(ValueError, match="not in the answer vocabulary"):
        r.encode_answer(["south"])


def test_responder_shapes():
    rng = make_rng(9)
    r = _responder(rng)
    assert r.cond_width == 56 and r.head.W.shape == (4, 6)
    probs = responder_probs(r, condition_vector(np.full(6, 1 / 6), np.full(50, 1 / 50)), _xs(rng, 5, 4))
    assert probs.shape == (5, 4)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_responder_generate_vocab_and_determinism():
    rng = make_rng(10)
    r = _responder(rng)
    for _ in range(20):
        xs = _xs(rng, int(rng.integers(1, 8)), 4)
        cls = (rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(50)))
        out = responder_generate(r, cls, xs)
        assert out == responder_generate(r, cls, xs)
        assert len(out) <= xs.shape[0]
        assert all(tok in r.answer_vocab and tok != EOS for tok in out)
    with pytest.raises(ValueError):
        responder_generate(r, cls, np.zeros((0, 4)))


def test_responder_loss_values():
    rng = make_rng(11)
    r = _responder(rng)
    r.head.W[...] = 0.0
    cond = condition_vector(one_hot(0, 6), one_hot(0, 50))
    assert responder_loss(r, cond, _xs(rng, 5, 4), (1, 2)) == pytest.approx(math.log(4))
    # head bias alone picks "alpha" everywhere; the answer fills all positions so no end symbol is scored
    r.head.b[...] = -800.0
    r.head.b[1] = 800.0
    assert responder_loss(r, cond, _xs(rng, 3, 4), (1, 1, 1)) == 0.0


def test_responder_targets_capped_at_question_length():
    rng = make_rng(12)
    r = _responder(rng)
    cond = condition_vector(one_hot(0, 6), one_hot(0, 50))
    xs = _xs(rng, 2, 4)
    # answer longer than the question: only the first two positions are supervised
    assert responder_loss(r, cond, xs, (1, 2, 3)) == pytest.approx(responder_loss(r, cond, xs, (1, 2)))


def test_responder_gradients_match_finite_differences():
    rng = make_rng(13)
    r = _responder(rng)
    for p in r.parameters().values():
        p[...] = rng.normal(0, 0.5, p.shape)

    class S:
        xs = rng.normal(size=(5, 4))
        cond = condition_vector(rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(50)))
        answer = (2, 1)

    _, grads = r.loss_and_grad(S)
    for name, p in r.parameters().items():
        if name.startswith("cond.") or name.startswith("head."):
            num = finite_diff_grad(lambda _: r.loss_and_grad(S)[0], p)
            assert relative_error(grads[name], num) < 1e-4, name


def test_load_parameters_checks_names_and_shapes():
    m = ModelOne.init(3, 4, 6, make_rng(0))
    tensors = {k: v.copy() for k, v in m.parameters().items()}
    other = ModelOne.init(3, 4, 6, make_rng(1))
    other.load_parameters(tensors)
    for k in tensors:
        np.testing.assert_array_equal(other.parameters()[k], tensors[k])
    with pytest.raises(ValueError, match="missing"):
        other.load_parameters({k: v for k, v in tensors.items() if k != "head.b"})
    tensors["head.b"] = np.zeros(5)
    with pytest.raises(ValueError, match="shape"):
        other.load_parameters(tensors)
