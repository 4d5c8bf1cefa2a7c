"""Question-intent classifiers and the class-conditioned answer prototype.

``ModelOne`` maps the last LSTM output to the main class. ``ModelTwo``
appends an all-zero padding step: the output at the last real token feeds
the main-class head, the output at the padding step feeds the fine-label
head. ``Responder`` is a bidirectional LSTM whose initial states are
affine images of the concatenated classifier probabilities, decoded
position by position through a softmax over an answer vocabulary.

All trainable tensors are exposed through ``parameters()`` as named,
writable arrays; ``loss_and_grad`` returns gradients under the same names.
Embeddings are inputs, never parameters.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from . import lstm
from .lstm import LstmParams, LstmState
from .numerics import PROB_FLOOR, Rng, argmax, cross_entropy, softmax

EOS = "</s>"


@dataclass
class DenseHead:
    W: np.ndarray  # (K, H)
    b: np.ndarray  # (K,)

    @classmethod
    def init(cls, K: int, H: int, rng: Rng | None = None) -> DenseHead:
        """Glorot-uniform weights, or all zeros when ``rng`` is None."""
        if rng is None:
            return cls(np.zeros((K, H)), np.zeros(K))
        s = np.sqrt(6.0 / (K + H))
        return cls(rng.uniform(-s, s, size=(K, H)), np.zeros(K))

    def probs(self, h: np.ndarray) -> np.ndarray:
        return softmax(self.W @ h + self.b)

    def tensors(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}


def _prefixed(prefix: str, tensors: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": v for k, v in tensors.items()}


def _softmax_xent_grad(p: np.ndarray, target: int) -> np.ndarray:
    # d(-log p[target]) / d logits; zero once the floor is active
    d = p.copy()
    if p[target] > PROB_FLOOR:
        d[target] -= 1.0
    else:
        d[:] = 0.0
    return d


class _Model:
    kind: str

    def parameters(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def load_parameters(self, tensors: dict[str, np.ndarray]) -> None:
        """Copy named tensors into this model's storage."""
        params = self.parameters()
        missing = set(params) - set(tensors)
        extra = set(tensors) - set(params)
        if missing or extra:
            raise ValueError(f"tensor names disagree: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, dst in params.items():
            src = np.asarray(tensors[name])
            if src.shape != dst.shape:
                raise ValueError(f"{name}: expected shape {dst.shape}, got {src.shape}")
            dst[...] = src


# ---------------------------------------------------------------- model one


class ModelOne(_Model):
    kind = "one"

    def __init__(self, cell: LstmParams, head: DenseHead):
        if head.W.shape[1] != cell.hidden_size:
            raise ValueError("head width must equal the LSTM hidden size")
        self.lstm = cell
        self.head = head

    @classmethod
    def init(cls, H: int, E: int, n_main: int, rng: Rng) -> ModelOne:
        return cls(lstm.init_params(H, E, rng), DenseHead.init(n_main, H, rng))

    @property
    def hidden_size(self) -> int:
        return self.lstm.hidden_size

    def parameters(self):
        return {**_prefixed("lstm", self.lstm.tensors()), **_prefixed("head", self.head.tensors())}

    def loss_and_grad(self, sample):
        return model1_loss_grad(self, sample.xs, sample.main)

    def predict(self, xs) -> tuple[int, None]:
        return argmax(model1_forward(self, xs)), None


def _final_h(cell: LstmParams, xs) -> tuple[list[LstmState], list]:
    return lstm.forward(cell, LstmState.zeros(cell.hidden_size), xs)


def model1_forward(m: ModelOne, xs) -> np.ndarray:
    states, _ = _final_h(m.lstm, xs)
    return m.head.probs(states[-1].h)


def model1_loss(m: ModelOne, xs, target: int) -> float:
    return cross_entropy(target, model1_forward(m, xs))


def model1_loss_grad(m: ModelOne, xs, target: int) -> tuple[float, dict[str, np.ndarray]]:
    states, caches = _final_h(m.lstm, xs)
    h = states[-1].h
    p = m.head.probs(h)
    dlogits = _softmax_xent_grad(p, target)
    up = np.zeros((len(caches), m.hidden_size))
    up[-1] = m.head.W.T @ dlogits
    g = lstm.backward(m.lstm, caches, up)
    grads = {
        **_prefixed("lstm", g.tensors()),
        "head.W": np.outer(dlogits, h),
        "head.b": dlogits,
    }
    return cross_entropy(target, p), grads


# ---------------------------------------------------------------- model two


class ModelTwo(_Model):
    kind = "two"

    def __init__(self, cell: LstmParams, main_head: DenseHead, sub_head: DenseHead):
        H = cell.hidden_size
        if main_head.W.shape[1] != H or sub_head.W.shape[1] != H:
            raise ValueError("head widths must equal the LSTM hidden size")
        self.lstm = cell
        self.main_head = main_head
        self.sub_head = sub_head
        pad = np.zeros(cell.input_size)
        pad.setflags(write=False)
        self.pad = pad

    @classmethod
    def init(cls, H: int, E: int, n_main: int, n_sub: int, rng: Rng) -> ModelTwo:
        return cls(lstm.init_params(H, E, rng), DenseHead.init(n_main, H, rng), DenseHead.init(n_sub, H, rng))

    @property
    def hidden_size(self) -> int:
        return self.lstm.hidden_size

    def parameters(self):
        return {
            **_prefixed("lstm", self.lstm.tensors()),
            **_prefixed("main_head", self.main_head.tensors()),
            **_prefixed("sub_head", self.sub_head.tensors()),
        }

    def loss_and_grad(self, sample):
        return model2_loss_grad(self, sample.xs, sample.main, sample.fine)

    def predict(self, xs) -> tuple[int, int]:
        main_p, sub_p = model2_forward(self, xs)
        return argmax(main_p), argmax(sub_p)


def _run_padded(m: ModelTwo, xs, pad=None):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("model two needs a non-empty (T, E) input sequence")
    pad = m.pad if pad is None else np.asarray(pad, dtype=np.float64)
    return _final_h(m.lstm, np.vstack([xs, pad[None, :]]))


def model2_hidden(m: ModelTwo, xs, pad=None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(h_T, h_{T+1})``: the inputs of the main and the sub head.

    ``pad`` substitutes the padding vector; it exists so the padding
    mechanism itself can be probed.
    """
    states, _ = _run_padded(m, xs, pad)
    return states[-2].h, states[-1].h


def model2_forward(m: ModelTwo, xs) -> tuple[np.ndarray, np.ndarray]:
    h_main, h_sub = model2_hidden(m, xs)
    return m.main_head.probs(h_main), m.sub_head.probs(h_sub)


def model2_loss(m: ModelTwo, xs, main_target: int, sub_target: int) -> float:
    main_p, sub_p = model2_forward(m, xs)
    return cross_entropy(main_target, main_p) + cross_entropy(sub_target, sub_p)


def model2_loss_grad(m: ModelTwo, xs, main_target: int, sub_target: int):
    states, caches = _run_padded(m, xs)
    h_main, h_sub = states[-2].h, states[-1].h
    main_p, sub_p = m.main_head.probs(h_main), m.sub_head.probs(h_sub)
    d_main = _softmax_xent_grad(main_p, main_target)
    d_sub = _softmax_xent_grad(sub_p, sub_target)
    up = np.zeros((len(caches), m.hidden_size))
    up[-2] = m.main_head.W.T @ d_main
    up[-1] = m.sub_head.W.T @ d_sub
    g = lstm.backward(m.lstm, caches, up)
    grads = {
        **_prefixed("lstm", g.tensors()),
        "main_head.W": np.outer(d_main, h_main),
        "main_head.b": d_main,
        "sub_head.W": np.outer(d_sub, h_sub),
        "sub_head.b": d_sub,
    }
    loss = cross_entropy(main_target, main_p) + cross_entropy(sub_target, sub_p)
    return loss, grads


# ---------------------------------------------------------------- responder


def condition_vector(main_p: np.ndarray, sub_p: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(main_p, dtype=np.float64), np.asarray(sub_p, dtype=np.float64)])


COND_MAPS = ("h_fwd", "c_fwd", "h_bwd", "c_bwd")


class Responder(_Model):
    """Bidirectional LSTM answer emitter conditioned on classifier output.

    ``answer_vocab[0]`` is the end-of-answer symbol. One answer token is
    read off per question position, so answers are at most as long as the
    question.
    """

    kind = "responder"

    def __init__(
        self,
        fwd: LstmParams,
        bwd: LstmParams,
        cond: dict[str, DenseHead],
        head: DenseHead,
        answer_vocab: Sequence[str],
    ):
        if list(answer_vocab[:1]) != [EOS] or len(set(answer_vocab)) != len(answer_vocab):
            raise ValueError(f"answer vocabulary must be unique and start with {EOS!r}")
        if head.W.shape != (len(answer_vocab), fwd.hidden_size + bwd.hidden_size):
            raise ValueError("answer head must map the concatenated BLSTM output to the answer vocabulary")
        self.fwd = fwd
        self.bwd = bwd
        self.cond = dict(cond)
        self.head = head
        self.answer_vocab = tuple(answer_vocab)
        self.answer_index = {w: k for k, w in enumerate(self.answer_vocab)}

    @classmethod
    def init(cls, H: int, E: int, cond_width: int, answer_vocab: Sequence[str], rng: Rng) -> Responder:
        fwd = lstm.init_params(H, E, rng)
        bwd = lstm.init_params(H, E, rng)
        cond = {name: DenseHead.init(H, cond_width, rng) for name in COND_MAPS}
        return cls(fwd, bwd, cond, DenseHead.init(len(answer_vocab), 2 * H, rng), answer_vocab)

    @property
    def hidden_size(self) -> int:
        return self.fwd.hidden_size

    @property
    def cond_width(self) -> int:
        return self.cond["h_fwd"].W.shape[1]

    def parameters(self):
        out = {**_prefixed("fwd", self.fwd.tensors()), **_prefixed("bwd", self.bwd.tensors())}
        for name in COND_MAPS:
            out.update(_prefixed(f"cond.{name}", self.cond[name].tensors()))
        out.update(_prefixed("head", self.head.tensors()))
        return out

    def loss_and_grad(self, sample):
        return responder_loss_grad(self, sample.cond, sample.xs, sample.answer)

    def encode_answer(self, tokens: Iterable[str]) -> tuple[int, ...]:
        ids = []
        for tok in tokens:
            if tok not in self.answer_index or tok == EOS:
                raise ValueError(f"answer token {tok!r} is not in the answer vocabulary")
            ids.append(self.answer_index[tok])
        return tuple(ids)


def build_answer_vocab(answers: Iterable[Sequence[str]]) -> tuple[str, ...]:
    return (EOS,) + tuple(sorted({tok for ans in answers for tok in ans} - {EOS}))


def _initial_states(r: Responder, cond: np.ndarray) -> tuple[LstmState, LstmState]:
    cond = np.asarray(cond, dtype=np.float64)
    if cond.shape != (r.cond_width,):
        raise ValueError(f"conditioning vector must have length {r.cond_width}, got {cond.shape}")
    a = {name: r.cond[name].W @ cond + r.cond[name].b for name in COND_MAPS}
    return LstmState(a["h_fwd"], a["c_fwd"]), LstmState(a["h_bwd"], a["c_bwd"])


def _responder_run(r: Responder, cond, xs):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("the responder needs a non-empty question")
    init_f, init_b = _initial_states(r, cond)
    out, caches = lstm.bi_forward(r.fwd, r.bwd, init_f, init_b, xs)
    probs = softmax(out @ r.head.W.T + r.head.b)
    return out, caches, probs


def responder_probs(r: Responder, cond, xs) -> np.ndarray:
    """Per-position answer distributions, shape ``(T, V_ans)``."""
    return _responder_run(r, cond, xs)[2]


def _answer_targets(answer: Sequence[int], T: int) -> list[int]:
    # supervise the answer plus the end symbol, capped at the question length
    return (list(answer) + [0])[:T]


def responder_loss(r: Responder, cond, xs, answer: Sequence[int]) -> float:
    probs = responder_probs(r, cond, xs)
    targets = _answer_targets(answer, probs.shape[0])
    return float(np.mean([cross_entropy(j, probs[t]) for t, j in enumerate(targets)]))


def responder_loss_grad(r: Responder, cond, xs, answer: Sequence[int]):
    cond = np.asarray(cond, dtype=np.float64)
    out, caches, probs = _responder_run(r, cond, xs)
    targets = _answer_targets(answer, probs.shape[0])
    n = len(targets)
    dlogits = np.zeros_like(probs)
    for t, j in enumerate(targets):
        dlogits[t] = _softmax_xent_grad(probs[t], j) / n
    g_f, g_b = lstm.bi_backward(r.fwd, r.bwd, caches, dlogits @ r.head.W)
    grads = {**_prefixed("fwd", g_f.tensors()), **_prefixed("bwd", g_b.tensors())}
    for name, d in zip(COND_MAPS, (g_f.h0, g_f.c0, g_b.h0, g_b.c0)):
        grads[f"cond.{name}.W"] = np.outer(d, cond)
        grads[f"cond.{name}.b"] = d
    grads["head.W"] = dlogits.T @ out
    grads["head.b"] = dlogits.sum(axis=0)
    loss = float(np.mean([cross_entropy(j, probs[t]) for t, j in enumerate(targets)]))
    return loss, grads


def responder_generate(r: Responder, classifier_out: tuple[np.ndarray, np.ndarray], xs) -> list[str]:
    """Greedy per-position decoding, stopping at the end symbol."""
    probs = responder_probs(r, condition_vector(*classifier_out), xs)
    tokens = []
    for row in probs:
        k = argmax(row)
        if k == 0:
            break
        tokens.append(r.answer_vocab[k])
    return tokens
