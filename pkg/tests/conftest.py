import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from synthetic import Lexicon, make_corpus  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture(scope="session")
def lexicon():
    return Lexicon(seed=0)


@pytest.fixture(scope="session")
def corpus(lexicon):
    return make_corpus(30, seed=1, lexicon=lexicon)


@pytest.fixture(scope="session")
def dev_corpus(lexicon):
    return make_corpus(15, seed=2, lexicon=lexicon, prefix="d")


@pytest.fixture(scope="session")
def small_config():
    from morphtagger.model import ModelConfig
    return ModelConfig(hidden_dim=32, word_dim=16, char_dim=16, learning_rate=1e-2,
                       epochs=12, batch_size=8, seed=3)


@pytest.fixture(scope="session")
def trained(corpus, dev_corpus, small_config):
    import copy
    from morphtagger.model import train
    return train(corpus, copy.deepcopy(small_config), dev=dev_corpus)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
