"""LSTM cell, unrolled forward pass, backpropagation through time and a
bidirectional wrapper.

Gate pre-activations read the concatenation ``[h_prev; x]`` (state first,
input second). The four gate blocks are stored stacked in one
``(4H, H+E)`` matrix in the order forget, input, candidate, output;
``W_f`` ... ``b_o`` are views into that storage, so updating a view
updates the cell.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .numerics import Rng, sigmoid

GATES = ("f", "i", "c", "o")
TENSOR_NAMES = tuple(f"W_{g}" for g in GATES) + tuple(f"b_{g}" for g in GATES)


class _GateBlocks:
    """Stacked ``W`` (4H x (H+E)) and ``b`` (4H) with per-gate views."""

    W: np.ndarray
    b: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.b.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.W.shape[1] - self.hidden_size

    def _block(self, arr: np.ndarray, gate: str) -> np.ndarray:
        H = self.hidden_size
        k = GATES.index(gate)
        return arr[k * H : (k + 1) * H]

    W_f = property(lambda self: self._block(self.W, "f"))
    W_i = property(lambda self: self._block(self.W, "i"))
    W_c = property(lambda self: self._block(self.W, "c"))
    W_o = property(lambda self: self._block(self.W, "o"))
    b_f = property(lambda self: self._block(self.b, "f"))
    b_i = property(lambda self: self._block(self.b, "i"))
    b_c = property(lambda self: self._block(self.b, "c"))
    b_o = property(lambda self: self._block(self.b, "o"))

    def tensors(self) -> dict[str, np.ndarray]:
        """The eight named tensors, as writable views."""
        return {name: getattr(self, name) for name in TENSOR_NAMES}


class LstmParams(_GateBlocks):
    def __init__(self, W: np.ndarray, b: np.ndarray):
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if b.ndim != 1 or b.shape[0] % 4 or W.ndim != 2 or W.shape[0] != b.shape[0] or W.shape[1] <= b.shape[0] // 4:
            raise ValueError(f"inconsistent LSTM shapes W{W.shape} b{b.shape}")
        self.W = W
        self.b = b

    @classmethod
    def zeros(cls, H: int, E: int) -> LstmParams:
        return cls(np.zeros((4 * H, H + E)), np.zeros(4 * H))

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray]) -> LstmParams:
        W = np.concatenate([tensors[f"W_{g}"] for g in GATES])
        b = np.concatenate([tensors[f"b_{g}"] for g in GATES])
        return cls(W, b)

    def copy(self) -> LstmParams:
        return LstmParams(self.W.copy(), self.b.copy())


class LstmGrads(_GateBlocks):
    """Parameter gradients plus gradients w.r.t. the initial ``(h, c)``."""

    def __init__(self, W: np.ndarray, b: np.ndarray, h0: np.ndarray, c0: np.ndarray):
        self.W = W
        self.b = b
        self.h0 = h0
        self.c0 = c0


@dataclass(frozen=True)
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, H: int) -> LstmState:
        return cls(np.zeros(H), np.zeros(H))


@dataclass(frozen=True)
class StepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray  # candidate state
    o: np.ndarray
    tanh_c: np.ndarray


def init_params(H: int, E: int, rng: Rng) -> LstmParams:
    """Glorot-uniform weights over the concatenated fan-in, zero biases
    except the forget gate, which starts at 1."""
    if H < 1 or E < 1:
        raise ValueError("hidden and input sizes must be positive")
    s = np.sqrt(6.0 / (H + E + H))
    W = rng.uniform(-s, s, size=(4 * H, H + E))
    b = np.zeros(4 * H)
    b[:H] = 1.0
    return LstmParams(W, b)


def _gates(z: np.ndarray, H: int):
    return sigmoid(z[:H]), sigmoid(z[H : 2 * H]), np.tanh(z[2 * H : 3 * H]), sigmoid(z[3 * H :])


def _check_state(params: LstmParams, state: LstmState):
    H = params.hidden_size
    if state.h.shape != (H,) or state.c.shape != (H,):
        raise ValueError(f"state shapes h{state.h.shape} c{state.c.shape} do not match hidden size {H}")


def step(params: LstmParams, state: LstmState, x: np.ndarray) -> tuple[LstmState, StepCache]:
    H = params.hidden_size
    x = np.asarray(x, dtype=np.float64)
    _check_state(params, state)
    if x.shape != (params.input_size,):
        raise ValueError(f"input shape {x.shape} does not match input size {params.input_size}")
    z = params.W @ np.concatenate([state.h, x]) + params.b
    f, i, g, o = _gates(z, H)
    c = f * state.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return LstmState(h, c), StepCache(x, state.h, state.c, f, i, g, o, tanh_c)


def forward(
    params: LstmParams, init_state: LstmState, xs: np.ndarray | Sequence[np.ndarray]
) -> tuple[list[LstmState], list[StepCache]]:
    """Unroll the cell over ``xs`` and keep every state and cache.

    The input half of every pre-activation is computed for all steps in a
    single product up front; the recurrence then only multiplies by the
    state half.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("forward needs a non-empty (T, E) input sequence")
    H = params.hidden_size
    if xs.shape[1] != params.input_size:
        raise ValueError(f"input width {xs.shape[1]} does not match input size {params.input_size}")
    _check_state(params, init_state)
    Wh = params.W[:, :H]
    zx = xs @ params.W[:, H:].T + params.b
    h, c = init_state.h, init_state.c
    states, caches = [], []
    for t in range(xs.shape[0]):
        f, i, g, o = _gates(zx[t] + Wh @ h, H)
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        caches.append(StepCache(xs[t], h, c, f, i, g, o, tanh_c))
        h, c = h_new, c_new
        states.append(LstmState(h, c))
    return states, caches


def backward(
    params: LstmParams,
    caches: Sequence[StepCache],
    upstream_h: np.ndarray | Sequence[np.ndarray],
    upstream_final_c: np.ndarray | None = None,
) -> LstmGrads:
    """Reverse-mode gradients through an unrolled forward pass.

    ``upstream_h[t]`` is dL/dh_t coming from outside the recurrence (zero
    rows for unsupervised steps); ``upstream_final_c`` is an optional
    dL/dc_T.
    """
    T = len(caches)
    H = params.hidden_size
    dh_up = np.asarray(upstream_h, dtype=np.float64)
    if dh_up.shape != (T, H):
        raise ValueError(f"need upstream h gradients of shape {(T, H)}, got {dh_up.shape}")
    Wh = params.W[:, :H]
    dZ = np.empty((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H) if upstream_final_c is None else np.asarray(upstream_final_c, dtype=np.float64).copy()
    for t in range(T - 1, -1, -1):
        k = caches[t]
        dh = dh_up[t] + dh_next
        dc = dc_next + dh * k.o * (1.0 - k.tanh_c**2)
        dz = dZ[t]
        dz[:H] = dc * k.c_prev * k.f * (1.0 - k.f)
        dz[H : 2 * H] = dc * k.g * k.i * (1.0 - k.i)
        dz[2 * H : 3 * H] = dc * k.i * (1.0 - k.g**2)
        dz[3 * H :] = dh * k.tanh_c * k.o * (1.0 - k.o)
        dh_next = Wh.T @ dz
        dc_next = dc * k.f
    inputs = np.concatenate(
        [np.stack([k.h_prev for k in caches]), np.stack([k.x for k in caches])], axis=1
    )
    return LstmGrads(dZ.T @ inputs, dZ.sum(axis=0), dh_next, dc_next)


def bi_forward(
    fwd_params: LstmParams,
    bwd_params: LstmParams,
    init_fwd: LstmState,
    init_bwd: LstmState,
    xs: np.ndarray,
) -> tuple[np.ndarray, tuple[list[StepCache], list[StepCache]]]:
    """Run one LSTM left-to-right and another right-to-left.

    Row ``t`` of the returned ``(T, H_fwd + H_bwd)`` array is
    ``[h_fwd(t); h_bwd(t)]`` with the backward run re-aligned to position
    ``t``. The caches feed :func:`bi_backward`.
    """
    xs = np.asarray(xs, dtype=np.float64)
    fwd_states, fwd_caches = forward(fwd_params, init_fwd, xs)
    bwd_states, bwd_caches = forward(bwd_params, init_bwd, xs[::-1])
    out = np.concatenate(
        [np.stack([s.h for s in fwd_states]), np.stack([s.h for s in bwd_states])[::-1]], axis=1
    )
    return out, (fwd_caches, bwd_caches)


def bi_backward(
    fwd_params: LstmParams,
    bwd_params: LstmParams,
    caches: tuple[list[StepCache], list[StepCache]],
    d_out: np.ndarray,
) -> tuple[LstmGrads, LstmGrads]:
    H = fwd_params.hidden_size
    return (
        backward(fwd_params, caches[0], d_out[:, :H]),
        backward(bwd_params, caches[1], d_out[::-1, H:]),
    )
