"""Direct random-recursive-tree simulators.

These grow the actual tree (node i >= 1 attaches to a uniform node in
{0..i-1}) and read statistics off it, independently of the urn engine.
They serve as cross-check oracles for the out-degree-profile and
protected-nodes models.
"""

from __future__ import annotations

import numpy as np


def rrt_parents(n_nodes: int, rng: np.random.Generator) -> np.ndarray:
    """Parent index of nodes 1..n-1 in a random recursive tree (root 0)."""
    if n_nodes < 2:
        return np.empty(0, dtype=np.int64)
    u = rng.random(n_nodes - 1)
    return (u * np.arange(1, n_nodes)).astype(np.int64)


def rrt_outdegree_profile(n_nodes: int, rng: np.random.Generator) -> np.ndarray:
    """counts[k] = number of nodes of out-degree k in a fresh RRT."""
    parents = rrt_parents(n_nodes, rng)
    outdeg = np.bincount(parents, minlength=n_nodes)
    return np.bincount(outdeg)


def rrt_protected_profile(n_nodes: int, rng: np.random.Generator) -> dict:
    """Internal-node profile by number of leaf-children in a fresh RRT.

    Returns counts[x] = internal nodes with exactly x leaf-children, the
    number of leaves, and the protected counts (internal nodes whose
    children are all internal: every leaf is then at distance >= 2).
    """
    parents = rrt_parents(n_nodes, rng)
    outdeg = np.bincount(parents, minlength=n_nodes)
    is_leaf = outdeg == 0
    # leaf-children count per node: parents of leaf nodes (node 0 is never a leaf here)
    leaf_nodes = np.nonzero(is_leaf)[0]
    leaf_nodes = leaf_nodes[leaf_nodes >= 1]
    leaf_children = np.bincount(parents[leaf_nodes - 1], minlength=n_nodes)
    internal = ~is_leaf
    counts = np.bincount(leaf_children[internal])
    n_internal = int(internal.sum())
    n_leaves = int(is_leaf.sum())
    protected = int(counts[0]) if len(counts) else 0
    return {
        "counts": counts,
        "n_internal": n_internal,
        "n_leaves": n_leaves,
        "protected_internal_fraction": protected / max(1, n_internal),
        "protected_all_fraction": protected / n_nodes,
    }
