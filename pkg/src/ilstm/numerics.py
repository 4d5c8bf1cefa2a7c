"""Dense numeric primitives shared by the LSTM, the heads and the trainer.

Everything works on float64 numpy arrays. Vectors are 1-d, matrices 2-d
and row-major.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

PROB_FLOOR = 1e-12

Rng = np.random.Generator


def make_rng(seed: int | Sequence[int] | np.random.SeedSequence) -> Rng:
    """Seeded generator; identical seeds give bit-identical streams."""
    return np.random.Generator(np.random.PCG64(seed))


def sigmoid(x: np.ndarray) -> np.ndarray:
    # exp(-|x|) never overflows, so both branches stay finite at any magnitude
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh_act(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def affine(W: np.ndarray, v: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return ``W @ v + b`` after checking the three shapes agree."""
    W = np.asarray(W)
    v = np.asarray(v)
    b = np.asarray(b)
    if W.ndim != 2 or v.ndim != 1 or b.ndim != 1 or W.shape[1] != v.shape[0] or W.shape[0] != b.shape[0]:
        raise ValueError(
            f"affine shape mismatch: W{tuple(W.shape)} @ v{tuple(v.shape)} + b{tuple(b.shape)}"
        )
    return W @ v + b


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(target: int, p: np.ndarray) -> float:
    """Negative log-probability of the target class, floored at ``PROB_FLOOR``."""
    p = np.asarray(p)
    if not 0 <= target < p.shape[-1]:
        raise IndexError(f"target {target} out of range for {p.shape[-1]} classes")
    return float(-np.log(max(p[target], PROB_FLOOR)))


def mean_cross_entropy(targets: Sequence[int], ps: Sequence[np.ndarray]) -> float:
    """Batch loss: per-example cross-entropy averaged over the batch."""
    if len(targets) != len(ps) or not targets:
        raise ValueError("need one probability vector per target and at least one of each")
    return float(np.mean([cross_entropy(t, p) for t, p in zip(targets, ps)]))


def one_hot(index: int, size: int) -> np.ndarray:
    if not 0 <= index < size:
        raise IndexError(f"class index {index} out of range [0, {size})")
    v = np.zeros(size)
    v[index] = 1.0
    return v


def argmax(v: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. ties go to the lowest index
    return int(np.argmax(v))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], params: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``params``.

    ``params`` is perturbed in place one coordinate at a time and restored
    afterwards, so ``f`` may close over the same array.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = params if isinstance(params, np.ndarray) else np.array(params, dtype=np.float64)
    grad = np.zeros(theta.shape)
    for idx in np.ndindex(theta.shape):
        orig = theta[idx]
        theta[idx] = orig + eps
        up = f(theta)
        theta[idx] = orig - eps
        down = f(theta)
        theta[idx] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError(f"non-finite function value at coordinate {idx}")
        grad[idx] = (up - down) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Norm-wise relative difference ``|a - n| / max(|a|, |n|, floor)``."""
    diff = float(np.linalg.norm(np.asarray(analytic) - np.asarray(numeric)))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), floor)
    return diff / scale
