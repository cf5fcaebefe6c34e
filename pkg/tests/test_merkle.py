import pytest

from stakegossip.merkle import (MerkleCommitment, MerkleProof, vec_commit,
                                vec_open, vec_verify)

from conftest import leaf


def test_single_leaf_roundtrip():
    com, tree = vec_commit([leaf(0)])
    proof = vec_open(tree, 0)
    assert vec_verify(com, 0, leaf(0), proof)


def test_roundtrip_at_table_size_400():
    items = [leaf(i) for i in range(400)]
    com, tree = vec_commit(items)
    for i in range(400):
        assert vec_verify(com, i, items[i], vec_open(tree, i))


def test_binding_wrong_item():
    items = [leaf(i) for i in range(5)]
    com, tree = vec_commit(items)
    assert not vec_verify(com, 0, leaf(1), vec_open(tree, 0))


def test_open_out_of_range():
    _, tree = vec_commit([leaf(i) for i in range(3)])
    with pytest.raises(IndexError):
        vec_open(tree, 3)
    with pytest.raises(IndexError):
        vec_open(tree, -1)


def test_empty_vector_rejected():
    with pytest.raises(ValueError):
        vec_commit([])


def test_padding_to_power_of_two():
    # 5 leaves pad to 8: proofs are 3 siblings long.
    items = [leaf(i) for i in range(5)]
    com, tree = vec_commit(items)
    assert len(vec_open(tree, 0).path) == 3
    assert com.size == 5


def test_mutation_flips_verification_exhaustive_16_leaves():
    # Any single-bit mutation of leaf, index, or any path byte fails.
    items = [leaf(i) for i in range(16)]
    com, tree = vec_commit(items)
    for idx in range(16):
        proof = vec_open(tree, idx)
        assert vec_verify(com, idx, items[idx], proof)
        # flip one bit of the item
        bad_item = bytes([items[idx][0] ^ 1]) + items[idx][1:]
        assert not vec_verify(com, idx, bad_item, proof)
        # wrong index (proof index mismatch)
        other = (idx + 1) % 16
        assert not vec_verify(com, other, items[other], proof)
        # flip one bit in every path position
        for lvl in range(len(proof.path)):
            sib = proof.path[lvl]
            bad_path = list(proof.path)
            bad_path[lvl] = bytes([sib[0] ^ 1]) + sib[1:]
            bad = MerkleProof(index=idx, path=tuple(bad_path))
            assert not vec_verify(com, idx, items[idx], bad)


def test_wrong_path_length_rejected():
    items = [leaf(i) for i in range(4)]
    com, tree = vec_commit(items)
    proof = vec_open(tree, 0)
    short = MerkleProof(index=0, path=proof.path[:-1])
    assert not vec_verify(com, 0, items[0], short)


def test_commitment_requires_positive_size():
    with pytest.raises(ValueError):
        MerkleCommitment(root=bytes(32), size=0)
