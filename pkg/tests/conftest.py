import os
from pathlib import Path

import numpy as np
import pytest

from robustae import baselines


def _find_mnist():
    roots = []
    env = os.environ.get("ROBUSTAE_DATA")
    if env:
        roots.append(Path(env))
    roots += [Path(__file__).parent / "data", Path("data"), Path("/root/data")]
    image_names = ("train-images-idx3-ubyte", "train-images.idx3-ubyte")
    label_names = ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte")
    for root in roots:
        if not root.is_dir():
            continue
        for ni in image_names:
            for nl in label_names:
                pi, pl = root / ni, root / nl
                if pi.is_file() and pl.is_file():
                    return pi, pl
    return None


def _find_cifar():
    roots = []
    env = os.environ.get("ROBUSTAE_DATA")
    if env:
        roots.append(Path(env))
    roots += [Path(__file__).parent / "data", Path("data"), Path("/root/data")]
    for root in roots:
        if not root.is_dir():
            continue
        for sub in (root, root / "cifar-10-batches-bin"):
            batches = [sub / f"data_batch_{i}.bin" for i in range(1, 6)]
            if all(b.is_file() for b in batches):
                return batches
    return None


MNIST_PATHS = _find_mnist()
CIFAR_PATHS = _find_cifar()

requires_mnist = pytest.mark.skipif(
    MNIST_PATHS is None,
    reason="MNIST IDX files not found (set ROBUSTAE_DATA); downloading is out of scope",
)
requires_cifar = pytest.mark.skipif(
    CIFAR_PATHS is None,
    reason="CIFAR-10 binary batches not found (set ROBUSTAE_DATA); downloading is out of scope",
)


@pytest.fixture(scope="session")
def mnist_train():
    from robustae import data

    return data.load_mnist(*MNIST_PATHS)


@pytest.fixture(scope="session")
def rpca_instance():
    """The 200x200 rank-5 + 5% sparse planted instance and its ADMM solution."""
    clean, sparse, observed = baselines.synthetic_rpca_instance(seed=42)
    low_rank, sparse_est, report = baselines.rpca_admm(observed)
    return {
        "clean": clean,
        "sparse": sparse,
        "observed": observed,
        "low_rank": low_rank,
        "sparse_est": sparse_est,
        "report": report,
        "rel_err": float(np.linalg.norm(low_rank - clean) / np.linalg.norm(clean)),
    }
