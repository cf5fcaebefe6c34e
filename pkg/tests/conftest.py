"""Shared builders for the test suite."""

from __future__ import annotations

import hashlib

import pytest

from stakegossip.chain import ContractState, ProtocolParams
from stakegossip.crypto import IdentityRegistry, derive_identity
from stakegossip.merkle import vec_commit
from stakegossip.records import (PeerRec, make_commit_rec, make_net_rec,
                                 make_stake_attestation)


def secret(tag: int) -> bytes:
    return hashlib.blake2b(b"test-secret" + tag.to_bytes(8, "big"),
                           digest_size=32).digest()


def leaf(tag: int) -> bytes:
    return hashlib.blake2b(b"test-leaf" + tag.to_bytes(8, "big"),
                           digest_size=32).digest()


class Fixture:
    """A small staked network: contract past its first boundary, registry,
    and helpers to mint valid records."""

    def __init__(self, count: int = 4, params: ProtocolParams | None = None):
        self.params = params or ProtocolParams()
        self.chain = ContractState(params=self.params)
        self.registry = IdentityRegistry()
        self.keymats = [derive_identity(secret(i)) for i in range(count)]
        for i, km in enumerate(self.keymats):
            self.registry.register(km)
            self.chain.deposit_and_stake(km.stake_id, 1, b"acct-%d" % i)
        self.chain.advance_clock(self.params.epoch_length)
        self.com = self.chain.get_commitment()
        self.roots = {self.com.root}

    def net_rec(self, i: int, ts: int = 1_000, addr: bytes | None = None):
        km = self.keymats[i]
        com = self.chain.get_commitment()
        proof, _ = self.chain.get_proof(km.stake_id)
        att = make_stake_attestation(km, com, proof)
        return make_net_rec(km, com, att, addr or b"addr-%d" % i, ts)

    def commit_rec(self, i: int, round_no: int, tag: int):
        com, _ = vec_commit([leaf(tag)])
        return make_commit_rec(self.keymats[i], round_no, com)

    def peer_rec(self, i: int, ts: int = 1_000, commit_tags: list = (),
                 addr: bytes | None = None) -> PeerRec:
        commits = tuple((self.commit_rec(i, rnd, tag), rnd)
                        for rnd, tag in commit_tags)
        return PeerRec(net_rec=self.net_rec(i, ts, addr), commits=commits)


@pytest.fixture
def net() -> Fixture:
    return Fixture()
