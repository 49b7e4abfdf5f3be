#!/usr/bin/env python

"""
clustering
==========

Spectral partition of a network into clusters:
    - connected components, sorted by size; components of 5 nodes or fewer are dropped
    - normalized Laplacian ``I - D^-1/2 A D^-1/2`` of the largest component
    - k-means on the eigenvectors of its L largest (or smallest) eigenvalues
    - every other kept component becomes one more cluster
"""

import logging

import numpy as np
from scipy.sparse import csgraph
from sklearn.cluster import KMeans

from .models import IsolatedNode, Partition, ValidationError


logger = logging.getLogger(__name__)

MIN_COMPONENT_SIZE = 6


def connected_components(net, min_size=MIN_COMPONENT_SIZE):
    """
    Connected components with at least `min_size` nodes, ascending by size
    (ties by smallest node index).

    :param net: Network.
    :type net: ivqr.models.Network
    :returns: Arrays of node indices.
    :rtype: list
    """
    _, labels = csgraph.connected_components(net.adjacency, directed=False)
    components = [np.flatnonzero(labels == c) for c in np.unique(labels)]
    kept = [c for c in components if c.size >= min_size]
    dropped = len(components) - len(kept)
    if dropped:
        logger.debug("Dropped %i component(s) with fewer than %i nodes.", dropped, min_size)
    return sorted(kept, key=lambda c: (c.size, c[0]))


def graph_laplacian(net, nodes=None):
    """
    Normalized graph Laplacian ``I - D^-1/2 A D^-1/2`` of the subgraph induced by `nodes`.

    :raises IsolatedNode: when a node of the subgraph has no neighbour in it.
    :rtype: numpy.ndarray
    """
    adjacency = net.adjacency
    if nodes is not None:
        adjacency = adjacency[nodes][:, nodes]
    adjacency = adjacency.toarray()
    degrees = adjacency.sum(axis=1)
    if np.any(degrees == 0):
        raise IsolatedNode("Node(s) %s have no neighbours." % list(np.flatnonzero(degrees == 0)[:10]))
    scale = 1.0 / np.sqrt(degrees)
    return np.eye(adjacency.shape[0]) - scale[:, None] * adjacency * scale[None, :]


def relabel_by_appearance(labels):
    """Map labels to 0.. in order of first appearance."""
    _, first = np.unique(labels, return_index=True)
    order = np.unique(labels)[np.argsort(first)]
    mapping = dict((old, new) for new, old in enumerate(order))
    return np.array([mapping[label] for label in labels], dtype=int)


def spectral_partition(net, L, seed=0, eigens="largest", n_init=50, max_iter=100, tol=1e-8,
                       min_component_size=MIN_COMPONENT_SIZE):
    """
    Partition a network into ``J = L + L'`` clusters.

    :param net: Network.
    :type net: ivqr.models.Network
    :param L: Number of k-means groups in the largest component.
    :type L: int
    :param seed: Seed of the k-means++ initializations.
    :type seed: int
    :param eigens: Embed with the eigenvectors of the "largest" or "smallest" eigenvalues.
        Recovering planted dense blocks needs "smallest".
    :type eigens: str
    :returns: Labels 0..L-1 in the largest component (by first appearance),
        L.. for the other kept components (ascending size), -1 for dropped nodes.
    :rtype: ivqr.models.Partition

    :Example:

    from ivqr.clustering import spectral_partition
    partition = spectral_partition(network, L=10, seed=7)
    partition.J, partition.sizes
    """
    if L < 1:
        raise ValidationError("L must be a positive integer.")
    if eigens not in ("largest", "smallest"):
        raise ValidationError("eigens must be 'largest' or 'smallest'.")
    components = connected_components(net, int(min_component_size))
    if not components:
        raise ValidationError("No connected component has at least %i nodes." % min_component_size)
    largest = components[-1]
    if largest.size <= L:
        raise ValidationError("Largest component has %i nodes; L=%i needs more." % (largest.size, L))

    laplacian = graph_laplacian(net, largest)
    _, vectors = np.linalg.eigh(laplacian)
    embedding = vectors[:, -L:] if eigens == "largest" else vectors[:, :L]
    if L == 1:
        groups = np.zeros(largest.size, dtype=int)
    else:
        kmeans = KMeans(n_clusters=L, init="k-means++", n_init=n_init, max_iter=max_iter, tol=tol, random_state=seed)
        groups = relabel_by_appearance(kmeans.fit_predict(embedding))

    labels = np.full(net.n, -1, dtype=int)
    labels[largest] = groups
    for extra, component in enumerate(components[:-1]):
        labels[component] = L + extra
    partition = Partition(labels)
    logger.info("Spectral partition: J=%i clusters (L=%i, L'=%i), %i node(s) dropped.",
                partition.J, L, len(components) - 1, int(np.sum(labels < 0)))
    return partition
