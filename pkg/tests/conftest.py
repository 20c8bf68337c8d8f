import numpy as np
import pytest

from pathrec.graph import KnowledgeGraph


def three_community_graph(seed=0, per_community=10, n_communities=3):
    """Entities split into communities, each wired internally by its own
    relation. Cross-community links are absent, so trained embeddings should
    separate the blocks."""
    rng = np.random.default_rng(seed)
    g = KnowledgeGraph()
    members = []
    rels = []
    for c in range(n_communities):
        rels.append(g.register_relation(f"links_{c}"))
        members.append(
            [g.register_entity("node", f"c{c}_n{i}") for i in range(per_community)]
        )
    for c in range(n_communities):
        nodes = members[c]
        for i, head in enumerate(nodes):
            # ring plus two random chords keeps every node connected
            g.add_triple(head, rels[c], nodes[(i + 1) % len(nodes)])
            for _ in range(2):
                tail = nodes[int(rng.integers(len(nodes)))]
                if tail != head:
                    g.add_triple(head, rels[c], tail)
    g.freeze()
    return g


def finite_difference(fn, arrays, step=1e-5):
    """Central-difference gradient of scalar fn wrt each array in arrays."""
    grads = []
    for arr in arrays:
        grad = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn()
            flat[i] = orig - step
            down = fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads.append(grad)
    return grads


@pytest.fixture
def community_graph():
    return three_community_graph(seed=0)
