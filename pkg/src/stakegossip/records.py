"""Gossip record and message types, their validation, merging, and the
construction and verification of slashing evidence.

Byte encodings: every signed or hashed tuple is encoded as the concatenation
of length-prefixed (4-byte big-endian) fields, in the field order of the
record definition. These encodings are the wire format; their field orders
and widths are documented in the README.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .crypto import (FieldElement, IdentityRegistry, KeyMaterial, check_sig,
                     field_from_bytes, share_compute, sign, _h)
from .merkle import MerkleCommitment, MerkleProof, vec_verify

# Retained commitment records per peer record: evidence older than this many
# rounds is dropped on merge. Old evidence is useless once the commitment
# window has moved on, but see the README note on epoch-length evidence.
MAX_COMMIT_ROUNDS = 4


def encode_fields(*parts: bytes) -> bytes:
    out = bytearray()
    for p in parts:
        out += len(p).to_bytes(4, "big")
        out += p
    return bytes(out)


def encode_addr_ts(addr: bytes, ts: int) -> bytes:
    return encode_fields(addr, ts.to_bytes(8, "big"))


def encode_nonces(nu: bytes | None, eta: bytes | None, round_no: int) -> bytes:
    # Full-table mode omits both seeds; the signature then covers the round only.
    parts = []
    if nu is not None:
        parts.append(nu)
    if eta is not None:
        parts.append(eta)
    parts.append(round_no.to_bytes(8, "big"))
    return encode_fields(*parts)


class Reject(enum.Enum):
    """Rejection causes, counted separately in metrics."""

    BAD_SIGNATURE = "bad-signature"
    BAD_ATTESTATION = "bad-attestation"
    STALE_COMMITMENT = "stale-commitment"
    EXPIRED_RECORD = "expired-record"
    STALE_ROUND = "stale-round"
    BAD_NONCE_SIG = "bad-nonce-sig"
    BAD_OPENING = "bad-opening"
    BAD_INDEX = "bad-index"
    BAD_SHARE = "bad-share"
    RATE_LIMITED = "rate-limited"
    DENY_LISTED = "deny-listed"


# ---------------------------------------------------------------------------
# Attestations (transparent stand-ins for the zero-knowledge proofs; they
# reveal the stake identifier, which is fine here because the privacy games
# themselves are out of scope).


@dataclass(frozen=True)
class StakeAttestation:
    """Attests that net_pk is backed by a stake entry in stake_com."""

    stake_id: bytes
    merkle_proof: MerkleProof
    binding_tag: bytes

    @staticmethod
    def tag(net_pk: bytes, stake_com_root: bytes) -> bytes:
        return _h(b"sg/stake-att", net_pk, stake_com_root)


def make_stake_attestation(keymat: KeyMaterial, stake_com: MerkleCommitment,
                           proof: MerkleProof) -> StakeAttestation:
    return StakeAttestation(
        stake_id=keymat.stake_id,
        merkle_proof=proof,
        binding_tag=StakeAttestation.tag(keymat.net_pk, stake_com.root),
    )


def verify_stake_attestation(att: StakeAttestation, net_pk: bytes,
                             stake_com: MerkleCommitment,
                             registry: IdentityRegistry) -> bool:
    if att.binding_tag != StakeAttestation.tag(net_pk, stake_com.root):
        return False
    if not vec_verify(stake_com, att.merkle_proof.index, att.stake_id, att.merkle_proof):
        return False
    # Key linkage: the claimed stake identifier must be the one derived from
    # the same master secret as net_pk (oracle check via the registry).
    keymat = registry.lookup(net_pk)
    return keymat is not None and keymat.stake_id == att.stake_id


@dataclass(frozen=True)
class ShareAttestation:
    """Attests well-formedness of a slashing share for (net_pk, round)."""

    binding_tag: bytes

    @staticmethod
    def tag(net_pk: bytes, round_no: int, req_com_root: bytes,
            share: FieldElement) -> bytes:
        return _h(b"sg/share-att", net_pk, round_no.to_bytes(8, "big"),
                  req_com_root, share.to_bytes())


def make_share_attestation(net_pk: bytes, round_no: int, req_com_root: bytes,
                           share: FieldElement) -> ShareAttestation:
    return ShareAttestation(
        binding_tag=ShareAttestation.tag(net_pk, round_no, req_com_root, share))


def verify_share_attestation(att: ShareAttestation, net_pk: bytes, round_no: int,
                             req_com: MerkleCommitment, share: FieldElement,
                             registry: IdentityRegistry) -> bool:
    """Recompute the share relation exactly for a registered identity."""
    if att.binding_tag != ShareAttestation.tag(net_pk, round_no, req_com.root, share):
        return False
    keymat = registry.lookup(net_pk)
    if keymat is None:
        return False
    expected = share_compute(keymat.sk, keymat.stake_sk, round_no,
                             field_from_bytes(req_com.root))
    return expected == share


# ---------------------------------------------------------------------------
# Records


@dataclass(frozen=True)
class NetRec:
    net_pk: bytes
    stake_com: MerkleCommitment
    stake_att: StakeAttestation
    addr: bytes
    ts: int  # simulated milliseconds
    sig: bytes

    def encode(self) -> bytes:
        return encode_fields(self.net_pk, self.stake_com.root,
                             self.stake_com.size.to_bytes(4, "big"),
                             self.stake_att.stake_id, self.stake_att.binding_tag,
                             self.addr, self.ts.to_bytes(8, "big"), self.sig)


def make_net_rec(keymat: KeyMaterial, stake_com: MerkleCommitment,
                 stake_att: StakeAttestation, addr: bytes, ts: int) -> NetRec:
    return NetRec(net_pk=keymat.net_pk, stake_com=stake_com, stake_att=stake_att,
                  addr=addr, ts=ts,
                  sig=sign(keymat.net_sk, encode_addr_ts(addr, ts)))


@dataclass(frozen=True)
class CommitRec:
    req_com: MerkleCommitment
    share: FieldElement
    share_att: ShareAttestation

    def encode(self) -> bytes:
        return encode_fields(self.req_com.root,
                             self.req_com.size.to_bytes(4, "big"),
                             self.share.to_bytes(), self.share_att.binding_tag)


def make_commit_rec(keymat: KeyMaterial, round_no: int,
                    req_com: MerkleCommitment) -> CommitRec:
    share = share_compute(keymat.sk, keymat.stake_sk, round_no,
                          field_from_bytes(req_com.root))
    att = make_share_attestation(keymat.net_pk, round_no, req_com.root, share)
    return CommitRec(req_com=req_com, share=share, share_att=att)


@dataclass(frozen=True)
class PeerRec:
    net_rec: NetRec
    commits: tuple[tuple[CommitRec, int], ...] = ()  # (commit record, round)

    @property
    def net_pk(self) -> bytes:
        return self.net_rec.net_pk

    def encode(self) -> bytes:
        parts = [self.net_rec.encode()]
        for cr, rnd in self.commits:
            parts.append(cr.encode())
            parts.append(rnd.to_bytes(8, "big"))
        return encode_fields(*parts)


@dataclass(frozen=True)
class SlashProof:
    net_pk: bytes
    stake_com: MerkleCommitment
    round_no: int
    cr1: CommitRec
    cr2: CommitRec

    def encode(self) -> bytes:
        return encode_fields(self.net_pk, self.stake_com.root,
                             self.stake_com.size.to_bytes(4, "big"),
                             self.round_no.to_bytes(8, "big"),
                             self.cr1.encode(), self.cr2.encode())


# ---------------------------------------------------------------------------
# Messages


@dataclass(frozen=True)
class Request:
    nu: bytes | None  # absent in full-table mode
    eta: bytes | None
    round_no: int
    nonce_sig: bytes
    commit_rec: CommitRec
    opening_index: int
    opening: MerkleProof
    net_rec: NetRec

    def encode(self) -> bytes:
        return encode_fields(
            self.nu if self.nu is not None else b"",
            self.eta if self.eta is not None else b"",
            self.round_no.to_bytes(8, "big"), self.nonce_sig,
            self.commit_rec.encode(),
            self.opening_index.to_bytes(4, "big"),
            encode_fields(*self.opening.path),
            self.net_rec.encode(),
        )


@dataclass(frozen=True)
class Response:
    peers: tuple[PeerRec, ...]
    slash_proofs: tuple[SlashProof, ...] = ()

    def encode(self) -> bytes:
        return encode_fields(*[p.encode() for p in self.peers],
                             *[s.encode() for s in self.slash_proofs])


# ---------------------------------------------------------------------------
# Operations


def validate_net_rec(rec: NetRec, accepted_coms: set[bytes], now: int, exp: int,
                     registry: IdentityRegistry) -> Reject | None:
    """Full admission check for a network record. Returns None when valid.

    accepted_coms holds the roots of the d most recent epoch commitments.
    """
    if not check_sig(rec.net_pk, encode_addr_ts(rec.addr, rec.ts), rec.sig, registry):
        return Reject.BAD_SIGNATURE
    if not verify_stake_attestation(rec.stake_att, rec.net_pk, rec.stake_com, registry):
        return Reject.BAD_ATTESTATION
    if rec.stake_com.root not in accepted_coms:
        return Reject.STALE_COMMITMENT
    if now - rec.ts > exp:
        return Reject.EXPIRED_RECORD
    return None


def _commit_key(cr: CommitRec, rnd: int) -> tuple[int, bytes]:
    return (rnd, cr.req_com.root)


def merge_peer_rec(existing: PeerRec, incoming: PeerRec) -> PeerRec:
    """Keep the newest network record (ties keep existing) and union the
    commitment lists, deduplicated by (round, commitment root)."""
    if existing.net_pk != incoming.net_pk:
        raise ValueError("cannot merge records of different identities")
    net_rec = incoming.net_rec if incoming.net_rec.ts > existing.net_rec.ts \
        else existing.net_rec
    seen: dict[tuple[int, bytes], tuple[CommitRec, int]] = {}
    for cr, rnd in existing.commits + incoming.commits:
        seen.setdefault(_commit_key(cr, rnd), (cr, rnd))
    merged = sorted(seen.values(), key=lambda p: (p[1], p[0].req_com.root))
    rounds = sorted({rnd for _, rnd in merged})
    if len(rounds) > MAX_COMMIT_ROUNDS:
        cutoff = rounds[-MAX_COMMIT_ROUNDS]
        merged = [p for p in merged if p[1] >= cutoff]
    return PeerRec(net_rec=net_rec, commits=tuple(merged))


def detect_duplicate_commit(rec: PeerRec) -> SlashProof | None:
    """Two distinct commitments in one round are slashing evidence. Returns
    the proof built from the first conflicting pair (ordered by round, then
    commitment root), or None."""
    by_round: dict[int, list[CommitRec]] = {}
    for cr, rnd in rec.commits:
        by_round.setdefault(rnd, []).append(cr)
    for rnd in sorted(by_round):
        crs = sorted(by_round[rnd], key=lambda c: c.req_com.root)
        for i in range(len(crs) - 1):
            if crs[i].req_com.root != crs[i + 1].req_com.root:
                return SlashProof(net_pk=rec.net_pk, stake_com=rec.net_rec.stake_com,
                                  round_no=rnd, cr1=crs[i], cr2=crs[i + 1])
    return None


def verify_slash_proof(proof: SlashProof, accepted_coms: set[bytes],
                       registry: IdentityRegistry) -> bool:
    if proof.stake_com.root not in accepted_coms:
        return False
    if proof.cr1.req_com.root == proof.cr2.req_com.root:
        return False
    for cr in (proof.cr1, proof.cr2):
        if not verify_share_attestation(cr.share_att, proof.net_pk, proof.round_no,
                                        cr.req_com, cr.share, registry):
            return False
    return True


def recover_from_slash_proof(proof: SlashProof) -> tuple[FieldElement, bytes]:
    """Interpolate the offender's stake secret from the two shares.

    Callers must have verified the proof; degenerate (equal-commitment)
    proofs are rejected here as a precondition failure.
    """
    from .crypto import h_id, share_recover
    c1 = field_from_bytes(proof.cr1.req_com.root)
    c2 = field_from_bytes(proof.cr2.req_com.root)
    if c1 == c2:
        raise ValueError("unverified proof: commitments are equal")
    stake_sk = share_recover(c1, proof.cr1.share, c2, proof.cr2.share)
    return stake_sk, h_id(stake_sk)
