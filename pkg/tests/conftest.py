import numpy as np
import pytest

from discoadapt.data import SynthConfig
from discoadapt.experiments import Workspace
from discoadapt.training import TrainConfig

TINY_SYNTH = dict(n_source_train=96, n_source_dev=40, n_target_train=96, n_target_dev=40, n_target_test=40,
                  embed_dim=12, content_per_class=4, n_filler=10, min_len=2, max_len=5)


def tiny_config(**kw) -> TrainConfig:
    base = dict(hidden_size=4, disc_hidden=(6, 6), recon_hidden=(6, 3, 6), pretrain_epochs=2, adapt_epochs=2,
                lr_pretrain=1e-2, lr_adversarial=1e-3, lr_reconstruction=1e-2, batch_size=16, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def tiny_ws():
    return Workspace.synthetic(SynthConfig(seed=11, **TINY_SYNTH))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, repeated in the terminal summary so it
# shows up even when output is captured
ACCEPTANCE_LINES: list[str] = []


def acceptance_line(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} -- {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
