import numpy as np
import pytest

from moosenet.dataset import load_manifest, load_pairs, split_view
from moosenet.synthetic import make_synthetic_dataset


@pytest.fixture(scope="session")
def synthetic(tmp_path_factory):
    """The 500/100 learnable fixture with noisy twins and STOI targets."""
    return make_synthetic_dataset(tmp_path_factory.mktemp("synthetic"), n_train=500, n_dev=100,
                                  n_test=0, dim=16, n_systems=10, seed=0)


@pytest.fixture(scope="session")
def small_synthetic(tmp_path_factory):
    return make_synthetic_dataset(tmp_path_factory.mktemp("small"), n_train=80, n_dev=30,
                                  n_test=20, dim=4, n_systems=5, seed=3)


@pytest.fixture(scope="session")
def small_data(small_synthetic):
    from moosenet.nethead.train import build_head_data

    recs = load_manifest(small_synthetic.manifest, aux_path=small_synthetic.aux)
    pairs = load_pairs(small_synthetic.pairs)
    classes = ("babble", "hum", "music")
    return (build_head_data(split_view(recs, "train"), pairs, classes),
            build_head_data(split_view(recs, "dev")))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
