"""Merkle-tree vector commitments with positional openings.

Commitments bind an ordered list of 32-byte items. Trees are padded to the
next power of two with an all-zeros sentinel leaf; leaf and interior nodes
hash under distinct domain prefixes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

SENTINEL_LEAF = bytes(32)


def _leaf_hash(item: bytes) -> bytes:
    return hashlib.blake2b(b"sg/mk-leaf" + item, digest_size=32).digest()


def _node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.blake2b(b"sg/mk-node" + left + right, digest_size=32).digest()


@dataclass(frozen=True)
class MerkleCommitment:
    root: bytes
    size: int  # committed leaf count, before padding

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("cannot commit to an empty vector")


@dataclass(frozen=True)
class MerkleProof:
    index: int
    path: tuple[bytes, ...]  # sibling digests, leaf level first


@dataclass(frozen=True)
class MerkleTree:
    """Auxiliary data kept by the committer: all tree levels, leaves first."""
    levels: tuple[tuple[bytes, ...], ...]
    size: int


def _padded_size(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def vec_commit(items: list[bytes]) -> tuple[MerkleCommitment, MerkleTree]:
    """Commit to an ordered list of 32-byte values."""
    n = len(items)
    if n == 0:
        raise ValueError("cannot commit to an empty vector")
    padded = _padded_size(n)
    level = [_leaf_hash(x) for x in items]
    level.extend(_leaf_hash(SENTINEL_LEAF) for _ in range(padded - n))
    levels = [tuple(level)]
    while len(level) > 1:
        level = [_node_hash(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        levels.append(tuple(level))
    return MerkleCommitment(root=level[0], size=n), MerkleTree(levels=tuple(levels), size=n)


def vec_open(tree: MerkleTree, index: int) -> MerkleProof:
    """Opening proof for one position."""
    if not 0 <= index < tree.size:
        raise IndexError(f"index {index} out of range for vector of size {tree.size}")
    path = []
    pos = index
    for level in tree.levels[:-1]:
        path.append(level[pos ^ 1])
        pos //= 2
    return MerkleProof(index=index, path=tuple(path))


def vec_verify(commitment: MerkleCommitment, index: int, item: bytes,
               proof: MerkleProof) -> bool:
    """Check that `item` sits at `index` under the committed root."""
    if index != proof.index or not 0 <= index < commitment.size:
        return False
    depth = _padded_size(commitment.size).bit_length() - 1
    if len(proof.path) != depth:
        return False
    node = _leaf_hash(item)
    pos = index
    for sibling in proof.path:
        if pos & 1:
            node = _node_hash(sibling, node)
        else:
            node = _node_hash(node, sibling)
        pos //= 2
    return node == commitment.root
