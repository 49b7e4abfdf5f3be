import itertools

import numpy as np
import pytest

from ivqr.clustering import connected_components, graph_laplacian, spectral_partition
from ivqr.models import IsolatedNode, Network, ValidationError


def clique(nodes):
    return list(itertools.combinations(nodes, 2))


def two_cliques():
    return clique(range(10)) + clique(range(10, 20)) + [(9, 10)]


def test_planted_blocks_are_recovered():
    partition = spectral_partition(Network(20, two_cliques()), L=2, seed=3, eigens="smallest")
    assert list(partition.labels) == [0] * 10 + [1] * 10
    assert partition.J == 2
    assert list(partition.sizes) == [10, 10]


def test_small_components_are_dropped_and_others_appended():
    path = [(20 + i, 21 + i) for i in range(5)]
    triangle = [(26, 27), (27, 28), (26, 28)]
    partition = spectral_partition(Network(29, two_cliques() + path + triangle), L=2, seed=3, eigens="smallest")
    assert partition.J == 3
    assert list(partition.labels[20:26]) == [2] * 6
    assert list(partition.labels[26:]) == [-1, -1, -1]
    assert list(partition.sizes) == [10, 10, 6]
    assert list(partition.kept) == list(range(26))


def test_components_are_sorted_by_size():
    path = [(20 + i, 21 + i) for i in range(7)]
    components = connected_components(Network(28, two_cliques() + path))
    assert [c.size for c in components] == [8, 20]


def test_single_group():
    partition = spectral_partition(Network(20, two_cliques()), L=1)
    assert set(partition.labels) == set([0])


def test_laplacian():
    laplacian = graph_laplacian(Network(20, two_cliques()))
    np.testing.assert_allclose(laplacian, laplacian.T)
    np.testing.assert_allclose(np.diag(laplacian), 1.0)
    assert np.linalg.eigvalsh(laplacian)[0] == pytest.approx(0.0, abs=1e-10)


def test_isolated_node():
    with pytest.raises(IsolatedNode):
        graph_laplacian(Network(3, [(0, 1)]))


@pytest.mark.parametrize("kwargs", [{"L": 0}, {"L": 2, "eigens": "middle"}, {"L": 25}])
def test_invalid_arguments(kwargs):
    with pytest.raises(ValidationError):
        spectral_partition(Network(20, two_cliques()), **kwargs)


def test_network_validation():
    with pytest.raises(ValidationError):
        Network(3, [(0, 0)])
    with pytest.raises(ValidationError):
        Network(3, [(0, 3)])
    net = Network.from_adjacency(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]))
    assert list(net.degrees) == [1, 2, 1]


def test_laplacian_of_small_complete_graphs():
    np.testing.assert_allclose(graph_laplacian(Network(2, [(0, 1)])), [[1.0, -1.0], [-1.0, 1.0]])
    triangle = graph_laplacian(Network(3, clique(range(3))))
    np.testing.assert_allclose(triangle[0, 1:], [-0.5, -0.5])
    np.testing.assert_allclose(np.linalg.eigvalsh(triangle), [0.0, 1.5, 1.5], atol=1e-12)
