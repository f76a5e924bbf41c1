"""Disjoint-set forest used to remap merged-away node ids."""


class UnionFind:
    """Union-find with path compression and *directed* union.

    When a merge deletes a node, its id is absorbed into the surviving
    node's set, so any stale reference resolves to the survivor via
    ``find``. Union is directed (the survivor becomes the root) because
    the merge decides which side lives; union by rank would be wrong here.
    """

    def __init__(self):
        self._parent = {}

    def find(self, x: int) -> int:
        parent = self._parent
        if x not in parent:
            return x
        root = x
        while parent.get(root, root) != root:
            root = parent[root]
        # path compression
        while parent.get(x, x) != root:
            parent[x], x = root, parent[x]
        return root

    def absorb(self, x: int, survivor: int) -> None:
        """Make ``survivor``'s root the representative of ``x``'s set."""
        rx, rs = self.find(x), self.find(survivor)
        if rx != rs:
            self._parent[rx] = rs

    def is_remapped(self, x: int) -> bool:
        return self.find(x) != x
