import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nodereg import _kernels, set_backend
from nodereg.graph import Graph

settings.register_profile(
    "default", max_examples=100, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(params=_kernels.available_backends())
def backend(request):
    prev = set_backend(request.param)
    yield request.param
    set_backend(prev)


def make_graph(n, edges, features=None, labels=None, num_classes=2, **masks):
    x = np.eye(n) if features is None else features
    y = np.zeros(n, dtype=int) if labels is None else labels
    return Graph.from_edges(n, edges, x, y, num_classes, *(masks.get(k) for k in
                                                           ("train", "val", "test")))


@pytest.fixture
def toy_graph():
    """Six nodes, two classes, a few edges, every mask populated."""
    rng = np.random.default_rng(7)
    edges = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (2, 3)]
    labels = np.array([0, 0, 0, 1, 1, 1])
    train = np.array([1, 0, 1, 1, 0, 1], bool)
    val = np.array([0, 1, 0, 0, 0, 0], bool)
    test = np.array([0, 0, 0, 0, 1, 0], bool)
    return make_graph(6, edges, rng.normal(size=(6, 4)), labels, 2,
                      train=train, val=val, test=test)
