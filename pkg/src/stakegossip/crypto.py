"""Algebraic and hash-based primitives: prime-field arithmetic, identity
derivation, PRNG scoring, simulated signatures, and the linear slashing-share
construction.

Everything here is deterministic. All hash-derived values come from one keyed
hash family (blake2b) with distinct domain-separation prefixes; signatures are
keyed hashes checked through a simulation-local registry rather than real
asymmetric cryptography.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

# Fixed prime modulus: Mersenne prime 2^61 - 1. Large enough that random
# 32-byte commitments reduced into the field collide with negligible
# probability, small enough that products fit in 128-bit intermediates.
Q = (1 << 61) - 1

_MASK64 = (1 << 64) - 1


def _h(domain: bytes, *parts: bytes) -> bytes:
    """Domain-separated 32-byte hash. Parts are length-prefixed so that
    concatenation boundaries are unambiguous."""
    h = hashlib.blake2b(domain, digest_size=32)
    for p in parts:
        h.update(len(p).to_bytes(4, "big"))
        h.update(p)
    return h.digest()


class FieldElement:
    """An element of GF(q), q = 2^61 - 1. Immutable."""

    __slots__ = ("value",)

    def __init__(self, value: int):
        object.__setattr__(self, "value", value % Q)

    def __setattr__(self, name, val):
        raise AttributeError("FieldElement is immutable")

    def __add__(self, other: "FieldElement") -> "FieldElement":
        return FieldElement(self.value + other.value)

    def __sub__(self, other: "FieldElement") -> "FieldElement":
        return FieldElement(self.value - other.value)

    def __mul__(self, other: "FieldElement") -> "FieldElement":
        return FieldElement(self.value * other.value)

    def __truediv__(self, other: "FieldElement") -> "FieldElement":
        return self * other.inverse()

    def __neg__(self) -> "FieldElement":
        return FieldElement(-self.value)

    def inverse(self) -> "FieldElement":
        if self.value == 0:
            raise ZeroDivisionError("0 has no multiplicative inverse in GF(q)")
        return FieldElement(pow(self.value, Q - 2, Q))

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(8, "big")

    def __eq__(self, other) -> bool:
        return isinstance(other, FieldElement) and self.value == other.value

    def __hash__(self) -> int:
        return hash(("FieldElement", self.value))

    def __repr__(self) -> str:
        return f"FieldElement({self.value})"


def field_from_bytes(data: bytes) -> FieldElement:
    """Interpret a digest as a field element (reduce big-endian integer mod q)."""
    return FieldElement(int.from_bytes(data, "big"))


# ---------------------------------------------------------------------------
# Identities

SEED_LEN = 16  # slice-selection nonces are 16-byte strings


@dataclass(frozen=True)
class KeyMaterial:
    """A node's master secret and the identifiers derived from it.

    The network keypair and the stake identifier are independently derived
    from ``sk`` and are unlinkable without knowledge of ``sk``.
    """

    sk: bytes
    net_sk: bytes
    net_pk: bytes
    stake_sk: FieldElement
    stake_id: bytes


def h_stake(sk: bytes) -> FieldElement:
    return field_from_bytes(_h(b"sg/stake-sk", sk))


def h_id(stake_sk: FieldElement) -> bytes:
    return _h(b"sg/stake-id", stake_sk.to_bytes())


def derive_identity(sk: bytes) -> KeyMaterial:
    """Derive the full identifier set from a 32-byte master secret."""
    if len(sk) != 32:
        raise ValueError("master secret must be 32 bytes")
    net_sk = _h(b"sg/net-sk", sk)
    net_pk = _h(b"sg/net-pk", net_sk)
    stake_sk = h_stake(sk)
    return KeyMaterial(sk=sk, net_sk=net_sk, net_pk=net_pk,
                       stake_sk=stake_sk, stake_id=h_id(stake_sk))


class IdentityRegistry:
    """Simulation-local registry mapping net_pk to key material.

    Stands in for two pieces of real-world machinery: the verification key
    lookup of a signature scheme, and the knowledge extractor a verifier of
    the zero-knowledge attestations would rely on. Append-only.
    """

    def __init__(self):
        self._by_pk: dict[bytes, KeyMaterial] = {}

    def register(self, keymat: KeyMaterial) -> None:
        self._by_pk[keymat.net_pk] = keymat

    def lookup(self, net_pk: bytes) -> KeyMaterial | None:
        return self._by_pk.get(net_pk)

    def __contains__(self, net_pk: bytes) -> bool:
        return net_pk in self._by_pk


def sign(net_sk: bytes, message: bytes) -> bytes:
    return _h(b"sg/sig", net_sk, message)


def check_sig(net_pk: bytes, message: bytes, sig: bytes,
              registry: IdentityRegistry) -> bool:
    """Accepts exactly the signatures produced with the key matching net_pk.

    Verification recomputes the keyed hash using the registry's copy of the
    signing key; unknown identities verify nothing.
    """
    keymat = registry.lookup(net_pk)
    if keymat is None:
        return False
    return sign(keymat.net_sk, message) == sig


# ---------------------------------------------------------------------------
# PRNG scoring
#
# prng_score maps a (seed, identifier) pair to [0, 1) with 53-bit precision,
# so every score is exactly representable as a double. The construction
# hashes seed and identifier separately into 64-bit keys (domain-separated),
# then applies an integer finalizer; the finalizer form admits an exactly
# equivalent vectorized evaluation over uint64 arrays, which the simulator
# relies on.

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def id_key(identifier: bytes) -> int:
    """64-bit hash key of an identifier (seed-independent, cacheable)."""
    return int.from_bytes(_h(b"sg/prng-id", identifier)[:8], "big")


def seed_key(seed: bytes) -> int:
    """64-bit hash key of a slice seed."""
    return int.from_bytes(_h(b"sg/prng-seed", seed)[:8], "big")


def _mix64(x: int) -> int:
    x &= _MASK64
    x ^= x >> 30
    x = (x * _MIX1) & _MASK64
    x ^= x >> 27
    x = (x * _MIX2) & _MASK64
    x ^= x >> 31
    return x


def prng_score(seed: bytes, identifier: bytes) -> float:
    """Deterministic score in [0, 1) for a (seed, identifier) pair."""
    return prng_score_from_keys(seed_key(seed), id_key(identifier))


def prng_score_from_keys(skey: int, ikey: int) -> float:
    x = _mix64((skey + _GOLDEN * ikey) & _MASK64)
    return (x >> 11) / float(1 << 53)


def prng_scores_vec(skey: int, ikeys: np.ndarray) -> np.ndarray:
    """Vectorized prng_score over an array of 64-bit identifier keys.

    Bit-exact match with the scalar path is asserted by the tests; the
    simulator depends on it.
    """
    x = (np.uint64(skey) + np.uint64(_GOLDEN) * ikeys.astype(np.uint64))
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX2)
    x ^= x >> np.uint64(31)
    return (x >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def prng_mask_vec(skey: int, ikeys: np.ndarray, threshold: float) -> np.ndarray:
    """Boolean mask prng_score < threshold without materializing floats.

    With m = x >> 11 exact in 53 bits, m / 2^53 < t  <=>  m < ceil(t * 2^53)
    (the product is a power-of-two scaling, hence exact), compared in uint64.
    """
    t = math.ceil(threshold * (1 << 53))
    x = (np.uint64(skey) + np.uint64(_GOLDEN) * ikeys.astype(np.uint64))
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX2)
    x ^= x >> np.uint64(31)
    return (x >> np.uint64(11)) < np.uint64(t)


# ---------------------------------------------------------------------------
# Slashing shares
#
# A node's per-round share is an affine function of its request commitment:
#     share = slope(sk, round) * req_com + stake_sk      (in GF(q))
# Two shares under distinct commitments in one round pin down the line and
# reveal the intercept stake_sk.


def share_slope(sk: bytes, round_no: int) -> FieldElement:
    """Per-round slope, derived from the master secret and the round number
    (8-byte big-endian encoding)."""
    return field_from_bytes(_h(b"sg/share-slope", sk, round_no.to_bytes(8, "big")))


def share_compute(sk: bytes, stake_sk: FieldElement, round_no: int,
                  req_com: FieldElement) -> FieldElement:
    return share_slope(sk, round_no) * req_com + stake_sk


def share_recover(c1: FieldElement, s1: FieldElement,
                  c2: FieldElement, s2: FieldElement) -> FieldElement:
    """Recover the intercept of the line through (c1, s1) and (c2, s2).

    For shares produced by share_compute with one (sk, round), the result is
    the stake secret, exactly.
    """
    if c1 == c2:
        raise ValueError("degenerate input: equal commitments admit no recovery")
    slope = (s1 - s2) / (c1 - c2)
    return s1 - slope * c1
