"""Flat ``key = value`` run configuration files.

Blank lines and anything after ``#`` are ignored. Unknown keys are an
error, so a typo never silently falls back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path

from .trainer import TrainConfig

PATH_KEYS = ("glove_path", "train_path", "test_path", "qa_path", "classifier_path")
_INT_KEYS = {"h", "batch_size", "epochs", "seed"}
_FLOAT_KEYS = {"lr", "beta1", "beta2", "epsilon", "val_fraction", "clip"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    model: str = "one"
    hs: tuple[int, ...] = (25, 50, 75, 100)
    paths: dict[str, Path] = field(default_factory=dict)

    def path(self, key: str) -> Path:
        if key not in self.paths:
            raise ConfigError(f"configuration is missing {key}")
        return self.paths[key]


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> RunConfig:
    train_kw: dict = {}
    run = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key in PATH_KEYS:
                p = Path(value).expanduser()
                run.paths[key] = p if p.is_absolute() or base_dir is None else base_dir / p
            elif key == "model":
                if value not in ("one", "two", "responder"):
                    raise ValueError(f"model must be one, two or responder, got {value!r}")
                run.model = value
            elif key == "hs":
                run.hs = tuple(int(v) for v in value.replace(",", " ").split())
            elif key in _INT_KEYS:
                train_kw[key] = int(value)
            elif key in _FLOAT_KEYS:
                train_kw[key] = None if key == "clip" and value.lower() in ("", "none", "off") else float(value)
            elif key == "optimizer":
                train_kw[key] = value
            else:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    try:
        run.train = TrainConfig(**train_kw)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for key, p in run.paths.items():
        if not p.exists():
            raise ConfigError(f"{source}: {key} does not exist: {p}")
    return run


def load_config(path: str | PathLike) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path), path.parent)
