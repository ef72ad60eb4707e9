import numpy as np
import pytest

from dualbn import data
from dualbn.model import ModelConfig, build_network


@pytest.fixture(scope="session")
def cifar_blobs():
    """Random but layout-correct CIFAR-10 binary files, built once per run."""
    rng = np.random.default_rng(0)
    blobs = {}
    for name in data.TRAIN_FILES + (data.TEST_FILE,):
        labels = rng.integers(0, 10, 10000, dtype=np.uint8)
        pixels = rng.integers(0, 256, (10000, 3072), dtype=np.uint8)
        blobs[name] = np.concatenate([labels[:, None], pixels], axis=1).tobytes()
    return blobs


@pytest.fixture(scope="session")
def cifar_tree(tmp_path_factory, cifar_blobs):
    """The blobs written once to disk in the expected directory layout."""
    root = tmp_path_factory.mktemp("cifar") / "cifar-10-batches-bin"
    root.mkdir()
    for name, blob in cifar_blobs.items():
        (root / name).write_bytes(blob)
    return root


def upcast_net(net):
    """Swap all parameters to float64 so finite differences are exact."""
    for p in net.params():
        p.value = p.value.astype(np.float64)
        p.grad = np.zeros_like(p.value)
        p.velocity = np.zeros_like(p.value)
    return net


@pytest.fixture
def tiny_net():
    def make(seed=0, num_classes=2, mode=None, **kw):
        from dualbn.batchnorm import BnMode
        cfg = ModelConfig(depth=10, width=1, num_classes=num_classes,
                          bn_mode=mode or BnMode.SINGLE, **kw)
        return build_network(cfg, seed=seed)
    return make
