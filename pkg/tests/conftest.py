import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import synth  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Synthetic TREC-format train/test files, a matching GloVe-format file
    and a run config pointing at them."""
    d = tmp_path_factory.mktemp("corpus")
    synth.write_trec(d / "train.label", 6, seed=1)
    synth.write_trec(d / "test.label", 2, seed=2)
    synth.write_glove(d / "glove.txt", synth.trec_vocab(), 12, seed=3)
    (d / "run.cfg").write_text(
        "# synthetic corpus\n"
        "glove_path = glove.txt\n"
        "train_path = train.label\n"
        "test_path = test.label\n"
        "h = 8\n"
        "hs = 4, 8\n"
        "epochs = 3\n"
        "lr = 0.01\n"
        "seed = 7\n"
    )
    return d


def real_data_paths():
    """GloVe and TREC files for the full-scale checks, from the environment."""
    keys = ("ILSTM_GLOVE", "ILSTM_TREC_TRAIN", "ILSTM_TREC_TEST")
    paths = {k: os.environ.get(k) for k in keys}
    if not all(paths.values()) or not all(Path(p).exists() for p in paths.values()):
        return None
    return {k: Path(v) for k, v in paths.items()}
