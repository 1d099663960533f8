import pathlib

import pytest

from airgrad.digits import generate_digit_corpus
from airgrad.mnist import load_mnist_dir

DATA_DIR = pathlib.Path(__file__).resolve().parent.parent / ".data"


@pytest.fixture(scope="session")
def data_dir():
    """Digit corpus in IDX format; generated once and cached in the repo."""
    return generate_digit_corpus(DATA_DIR)


@pytest.fixture(scope="session")
def train_set(data_dir):
    return load_mnist_dir(data_dir, "train")


@pytest.fixture(scope="session")
def test_set(data_dir):
    return load_mnist_dir(data_dir, "test")
