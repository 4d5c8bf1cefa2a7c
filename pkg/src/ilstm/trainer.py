"""Minibatch training, accuracy, gradient checking and the hidden-size sweep."""

from __future__ import annotations

import csv
import io
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import batches, split_validation
from .models import ModelOne, ModelTwo, Responder, build_answer_vocab
from .numerics import finite_diff_grad, make_rng, relative_error

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")


class TrainingAborted(RuntimeError):
    """Raised when a batch produces a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    h: int = 50
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    clip: float | None = None
    val_fraction: float = 0.0

    def __post_init__(self):
        if self.h < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("h and batch_size must be positive, epochs non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.lr < 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1 or self.epsilon <= 0:
            raise ValueError("invalid optimizer hyperparameters")
        if self.clip is not None and self.clip <= 0:
            raise ValueError("clip threshold must be positive")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")


class Adam:
    """Per-tensor first/second moment estimates with bias correction.

    ``m``, ``v`` and ``t`` are the optimizer state; updates are applied in
    place to the arrays handed to :meth:`step`.
    """

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)


class Sgd:
    def __init__(self, lr=1e-2):
        self.lr = lr
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for name, p in params.items():
            p -= self.lr * grads[name]


def make_optimizer(config: TrainConfig):
    if config.optimizer == "adam":
        return Adam(config.lr, config.beta1, config.beta2, config.epsilon)
    return Sgd(config.lr)


def clip_global_norm(grads: dict[str, np.ndarray], threshold: float) -> float:
    """Scale all gradients in place so their joint L2 norm is at most ``threshold``."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > threshold:
        scale = threshold / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_main_acc: float | None = None
    train_sub_acc: float | None = None
    test_main_acc: float | None = None
    test_sub_acc: float | None = None


EPOCH_COLUMNS = ("epoch", "train_loss", "train_main_acc", "train_sub_acc", "test_main_acc", "test_sub_acc")


def _fmt(x, fmt):
    return "" if x is None else format(x, fmt)


def epochs_to_csv(records: Sequence[EpochRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPOCH_COLUMNS)
    for r in records:
        w.writerow(
            [r.epoch, _fmt(r.train_loss, ".6f")]
            + [_fmt(a, ".6f") for a in (r.train_main_acc, r.train_sub_acc, r.test_main_acc, r.test_sub_acc)]
        )
    return buf.getvalue()


def evaluate(model, data: Sequence) -> tuple[float, float | None]:
    """Fraction of correct argmax predictions: ``(main, sub)``; sub is None
    for models without a fine-label head."""
    if not data:
        raise ValueError("cannot evaluate on an empty dataset")
    main_ok = sub_ok = 0
    has_sub = False
    for s in data:
        main, sub = model.predict(s.xs)
        main_ok += main == s.main
        if sub is not None:
            has_sub = True
            sub_ok += sub == s.fine
    n = len(data)
    return main_ok / n, (sub_ok / n if has_sub else None)


def train(
    model,
    data: Sequence,
    config: TrainConfig,
    test_data: Sequence | None = None,
    rng: np.random.Generator | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
):
    """Fit ``model`` in place by minibatch gradient descent.

    Each batch's gradient is the mean of per-example gradients (sequences
    are never padded together). Classifiers are scored on the training
    set, and on ``test_data`` when given, after every epoch. Returns the
    model and one :class:`EpochRecord` per epoch.
    """
    if not data:
        raise ValueError("training data is empty")
    if rng is None:
        rng = make_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
    if config.val_fraction > 0:
        data, _ = split_validation(data, config.val_fraction, rng)
    params = model.parameters()
    opt = make_optimizer(config)
    classifier = model.kind in ("one", "two")
    records = []
    for epoch in range(1, config.epochs + 1):
        total, count = 0.0, 0
        for b, batch in enumerate(batches(data, config.batch_size, rng), start=1):
            acc = {name: np.zeros_like(p) for name, p in params.items()}
            for sample in batch:
                loss, grads = model.loss_and_grad(sample)
                if not np.isfinite(loss):
                    raise TrainingAborted(f"non-finite loss at epoch {epoch}, batch {b}")
                total += loss
                count += 1
                for name, g in grads.items():
                    acc[name] += g
            for g in acc.values():
                g /= len(batch)
            if config.clip is not None:
                clip_global_norm(acc, config.clip)
            opt.step(params, acc)
        rec = {"epoch": epoch, "train_loss": total / count}
        if classifier:
            rec["train_main_acc"], rec["train_sub_acc"] = evaluate(model, data)
            if test_data:
                rec["test_main_acc"], rec["test_sub_acc"] = evaluate(model, test_data)
        record = EpochRecord(**rec)
        log.info("epoch %d: %s", epoch, record)
        records.append(record)
        if on_epoch is not None:
            on_epoch(record)
    return model, records


def build_classifier(kind: str, config: TrainConfig, E: int, n_main: int, n_sub: int, rng=None):
    if rng is None:
        rng = make_rng(np.random.SeedSequence(config.seed).spawn(2)[0])
    if kind == "one":
        return ModelOne.init(config.h, E, n_main, rng)
    if kind == "two":
        return ModelTwo.init(config.h, E, n_main, n_sub, rng)
    raise ValueError(f"unknown classifier kind {kind!r}")


# ---------------------------------------------------------- gradient checks

GRADCHECK_KINDS = ("one", "two", "responder")


@dataclass
class GradCheckReport:
    tolerance: float
    trials: int
    max_error: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.max_error.values())

    def failures(self) -> list[str]:
        return [name for name, e in self.max_error.items() if not e < self.tolerance]

    def lines(self) -> list[str]:
        return [
            f"{name:<28} {err:.3e}  {'ok' if err < self.tolerance else 'FAIL'}"
            for name, err in self.max_error.items()
        ]


class _RandomSample:
    def __init__(self, **kw):
        self.__dict__.update(kw)


def _scramble(model, rng):
    for p in model.parameters().values():
        p[...] = rng.normal(0.0, 0.5, size=p.shape)


def _random_instance(kind: str, rng):
    T = int(rng.integers(2, 7))
    if kind == "one":
        H, E = 4, 5
        model = ModelOne.init(H, E, 3, rng)
        sample = _RandomSample(xs=rng.normal(size=(T, E)), main=int(rng.integers(3)), fine=0)
    elif kind == "two":
        H, E = 4, 5
        model = ModelTwo.init(H, E, 3, 5, rng)
        sample = _RandomSample(xs=rng.normal(size=(T, E)), main=int(rng.integers(3)), fine=int(rng.integers(5)))
    elif kind == "responder":
        H, E = 3, 4
        vocab = build_answer_vocab([["a", "b", "c", "d", "e"]])
        model = Responder.init(H, E, 3 + 5, vocab, rng)
        answer = tuple(int(k) for k in rng.integers(1, len(vocab), size=int(rng.integers(0, T))))
        cond = np.concatenate([rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(5))])
        sample = _RandomSample(xs=rng.normal(size=(T, E)), cond=cond, answer=answer)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    _scramble(model, rng)
    return model, sample


def grad_check(
    model_kind: str | Sequence[str] = GRADCHECK_KINDS,
    trials: int = 20,
    tolerance: float = 1e-4,
    seed: int = 0,
    eps: float = 1e-5,
    tamper: Callable[[dict[str, np.ndarray]], None] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients with central differences on small random
    models (hidden size <= 5, input width <= 8, length <= 6).

    The report holds the worst norm-wise relative error per trainable
    tensor over all trials. ``tamper`` may edit the analytic gradients
    before comparison, for fault injection.
    """
    kinds = (model_kind,) if isinstance(model_kind, str) else tuple(model_kind)
    report = GradCheckReport(tolerance, trials)
    for kind in kinds:
        rng = make_rng([seed, GRADCHECK_KINDS.index(kind) if kind in GRADCHECK_KINDS else 99])
        for _ in range(trials):
            model, sample = _random_instance(kind, rng)
            _, grads = model.loss_and_grad(sample)
            if tamper is not None:
                tamper(grads)
            for name, p in model.parameters().items():
                numeric = finite_diff_grad(lambda _: model.loss_and_grad(sample)[0], p, eps)
                key = f"{kind}/{name}"
                err = relative_error(grads[name], numeric)
                report.max_error[key] = max(report.max_error.get(key, 0.0), err)
    return report


# ---------------------------------------------------------------- H sweep


@dataclass(frozen=True)
class SweepRow:
    h: int
    train_main: float
    train_sub: float | None
    test_main: float
    test_sub: float | None


@dataclass
class SweepTable:
    kind: str
    rows: list[SweepRow]

    @property
    def columns(self) -> tuple[str, ...]:
        if self.kind == "two":
            return ("h", "train_main", "train_sub", "test_main", "test_sub")
        return ("h", "train_main", "test_main")

    def _cells(self, row: SweepRow) -> list[str]:
        pct = lambda x: f"{100 * x:.2f}"  # noqa: E731
        if self.kind == "two":
            return [str(row.h), pct(row.train_main), pct(row.train_sub), pct(row.test_main), pct(row.test_sub)]
        return [str(row.h), pct(row.train_main), pct(row.test_main)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow(self._cells(row))
        return buf.getvalue()

    def to_text(self) -> str:
        cells = [list(self.columns)] + [self._cells(r) for r in self.rows]
        widths = [max(len(c[k]) for c in cells) for k in range(len(self.columns))]
        return "\n".join("  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in cells) + "\n"


def sweep_h(
    hs: Sequence[int],
    config: TrainConfig,
    kind: str,
    train_data: Sequence,
    test_data: Sequence,
    n_main: int,
    n_sub: int,
) -> SweepTable:
    """Train and score one model per hidden size, all from the same seed."""
    if not hs or any(h < 1 for h in hs):
        raise ValueError("hidden sizes must be a non-empty list of positive integers")
    E = train_data[0].xs.shape[1]
    rows = []
    for h in hs:
        cfg = replace(config, h=h)
        model = build_classifier(kind, cfg, E, n_main, n_sub)
        train(model, train_data, cfg)
        tr_main, tr_sub = evaluate(model, train_data)
        te_main, te_sub = evaluate(model, test_data)
        rows.append(SweepRow(h, tr_main, tr_sub, te_main, te_sub))
    return SweepTable(kind, rows)

