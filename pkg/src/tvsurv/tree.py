"""Flat binary-tree representation shared by both tree flavors.

Nodes live in parallel arrays.  Numeric splits send ``x <= threshold``
left; categorical splits send codes whose bit is set in ``left_mask``
left.  Levels never seen in the node during growth route right.
"""
from __future__ import annotations

import numpy as np


class Tree:
    __slots__ = (
        "feature",
        "threshold",
        "left_mask",
        "child_left",
        "child_right",
        "n_node",
        "payload",
    )

    def __init__(self, feature, threshold, left_mask, child_left, child_right, n_node, payload):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left_mask = np.asarray(left_mask, dtype=np.int64)
        self.child_left = np.asarray(child_left, dtype=np.int32)
        self.child_right = np.asarray(child_right, dtype=np.int32)
        self.n_node = np.asarray(n_node, dtype=np.int32)
        self.payload = np.asarray(payload, dtype=np.float64)

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def is_leaf(self):
        return self.feature < 0

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    def apply(self, X):
        """Route rows of X to their leaf node index."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        node = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            feat = self.feature[node]
            live = np.nonzero(feat >= 0)[0]
            if live.size == 0:
                return node
            cur = node[live]
            xv = X[live, feat[live]]
            mask = self.left_mask[cur]
            is_cat = mask >= 0
            codes = np.where(is_cat, xv, 0.0).astype(np.int64)
            go_left = np.where(
                is_cat,
                (mask >> codes) & 1 == 1,
                xv <= self.threshold[cur],
            )
            node[live] = np.where(go_left, self.child_left[cur], self.child_right[cur])

    def to_json_obj(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left_mask": self.left_mask.tolist(),
            "child_left": self.child_left.tolist(),
            "child_right": self.child_right.tolist(),
            "n_node": self.n_node.tolist(),
            "payload": self.payload.tolist(),
        }

    @classmethod
    def from_json_obj(cls, obj):
        return cls(
            obj["feature"],
            obj["threshold"],
            obj["left_mask"],
            obj["child_left"],
            obj["child_right"],
            obj["n_node"],
            obj["payload"],
        )


class TreeBuilder:
    """Accumulates nodes in preorder; finalize() freezes the arrays."""

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left_mask = []
        self.child_left = []
        self.child_right = []
        self.n_node = []
        self.payload = []

    def add_node(self, n_rows, payload=np.nan):
        nid = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left_mask.append(-1)
        self.child_left.append(-1)
        self.child_right.append(-1)
        self.n_node.append(n_rows)
        self.payload.append(payload)
        return nid

    def set_split(self, nid, feature, threshold=np.nan, left_mask=-1):
        self.feature[nid] = feature
        self.threshold[nid] = threshold
        self.left_mask[nid] = left_mask

    def set_children(self, nid, left, right):
        self.child_left[nid] = left
        self.child_right[nid] = right

    def finalize(self):
        return Tree(
            self.feature,
            self.threshold,
            self.left_mask,
            self.child_left,
            self.child_right,
            self.n_node,
            self.payload,
        )
