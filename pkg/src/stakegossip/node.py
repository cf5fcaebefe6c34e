"""Per-node protocol state machine: heartbeat emission, request handling,
record ingestion, table maintenance, epoch transitions, eclipse-flag
evaluation, and overlay sampling.

A NodeState is exclusively owned by its driver (the simulator's event loop);
all cross-node interaction happens through the record/message values defined
in `records`.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from . import records
from .chain import ChainError, ContractState
from .crypto import (SEED_LEN, IdentityRegistry, KeyMaterial, check_sig,
                     prng_score, sign)
from .merkle import MerkleCommitment, vec_commit, vec_open, vec_verify
from .records import (CommitRec, PeerRec, Reject, Request, Response, SlashProof,
                      detect_duplicate_commit, encode_nonces, make_commit_rec,
                      make_net_rec, make_stake_attestation, merge_peer_rec,
                      recover_from_slash_proof, validate_net_rec,
                      verify_slash_proof)

SEED_IN_REQUEST = "seed-in-request"
FULL_TABLE = "full-table"


@dataclass(frozen=True)
class NodeConfig:
    n: int
    s: float
    table_cap_slack: float = 0.2
    flag_threshold: float = 0.75
    overlay_prob: float = 0.125
    retrieval_mode: str = SEED_IN_REQUEST
    record_expiry: int = 8_000
    commitment_window: int = 2
    round_length: int = 2_000  # rounds are wall-clock aligned

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("table scaling constant must be >= 1")
        if not 0 < self.s / math.sqrt(self.n) < 1:
            raise ValueError("slice threshold s/sqrt(n) must lie in (0, 1)")
        if not 0 < self.flag_threshold < 1:
            raise ValueError("flag threshold must lie in (0, 1)")
        if not 0 < self.overlay_prob <= 1:
            raise ValueError("overlay probability must lie in (0, 1]")
        if self.retrieval_mode not in (SEED_IN_REQUEST, FULL_TABLE):
            raise ValueError(f"unknown retrieval mode {self.retrieval_mode!r}")

    @property
    def slice_threshold(self) -> float:
        return self.s / math.sqrt(self.n)

    @property
    def batch_cap(self) -> int:
        return math.ceil(self.s * math.sqrt(self.n))

    @property
    def table_cap(self) -> int:
        return math.ceil((1 + self.table_cap_slack) * self.s * math.sqrt(self.n))


class RequestRejected(Exception):
    def __init__(self, reason: Reject):
        super().__init__(reason.value)
        self.reason = reason


@dataclass(frozen=True)
class HeartbeatBatch:
    requests: tuple[tuple[bytes, Request], ...]  # (destination addr, request)
    req_com: MerkleCommitment | None
    commit_rec: CommitRec | None
    round_no: int


@dataclass
class ReceiveResult:
    accepted: bool
    reason: Reject | None = None
    slash_proof: SlashProof | None = None


@dataclass
class NodeState:
    keymat: KeyMaterial
    addr: bytes
    config: NodeConfig
    registry: IdentityRegistry
    chain: ContractState | None = None
    t_gsp: dict[bytes, PeerRec] = field(default_factory=dict)
    t_priv: dict[bytes, PeerRec] = field(default_factory=dict)
    nu: bytes = b""
    eta: bytes = b""
    round: int = -1
    acc_coms: list[MerkleCommitment] = field(default_factory=list)
    stake_com: MerkleCommitment | None = None
    own_stake_att: records.StakeAttestation | None = None
    deny_list: dict[bytes, SlashProof] = field(default_factory=dict)
    recent_reqs: dict[int, set[bytes]] = field(default_factory=dict)
    new_unique_this_round: set[bytes] = field(default_factory=set)
    flag_history: list[tuple[int, bool]] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)
    stalled: bool = False
    _nu_rng: random.Random = field(default_factory=random.Random)
    _eta_rng: random.Random = field(default_factory=random.Random)
    _net_rec: records.NetRec | None = None

    @property
    def net_pk(self) -> bytes:
        return self.keymat.net_pk

    def accepted_roots(self) -> set[bytes]:
        return {c.root for c in self.acc_coms}

    def count(self, key: str) -> None:
        self.counters[key] = self.counters.get(key, 0) + 1


def make_node(keymat: KeyMaterial, addr: bytes, config: NodeConfig,
              registry: IdentityRegistry, chain: ContractState | None = None,
              nu_seed: int | None = None, eta_seed: int | None = None,
              bootstrap: list[PeerRec] | None = None) -> NodeState:
    """Construct a node, pull its stake attestation from the chain, and
    inject bootstrap contacts as pre-validated records."""
    registry.register(keymat)
    state = NodeState(keymat=keymat, addr=addr, config=config,
                      registry=registry, chain=chain,
                      _nu_rng=random.Random(nu_seed),
                      _eta_rng=random.Random(eta_seed))
    if chain is not None:
        state.stake_com = chain.get_commitment()
        state.acc_coms = [state.stake_com]
        proof, _ = chain.get_proof(keymat.stake_id)
        state.own_stake_att = make_stake_attestation(keymat, state.stake_com, proof)
    for rec in bootstrap or []:
        state.t_gsp[rec.net_pk] = rec
        state.t_priv[rec.net_pk] = rec
    return state


def _fresh_seed(rng: random.Random) -> bytes:
    return rng.getrandbits(8 * SEED_LEN).to_bytes(SEED_LEN, "big")


def begin_round(state: NodeState, round_no: int, now: int) -> HeartbeatBatch:
    """Start a heartbeat round: sample fresh slice seeds, rebuild the signed
    identity record, commit to this round's recipients, and emit one request
    per recipient carrying its opening."""
    if round_no <= state.round:
        raise ValueError("rounds must advance")
    if state.stalled:
        return HeartbeatBatch(requests=(), req_com=None, commit_rec=None,
                              round_no=round_no)
    state.round = round_no
    state.nu = _fresh_seed(state._nu_rng)
    state.eta = _fresh_seed(state._eta_rng)
    state.new_unique_this_round = set()
    for r in [r for r in state.recent_reqs if r < round_no - 1]:
        del state.recent_reqs[r]

    state._net_rec = make_net_rec(state.keymat, state.stake_com,
                                  state.own_stake_att, state.addr, now)

    # Recipients: current gossip table ordered by this round's slice score,
    # truncated to the per-round quota.
    dests = sorted(state.t_gsp,
                   key=lambda pk: (prng_score(state.nu, pk), pk))[:state.config.batch_cap]
    if not dests:
        return HeartbeatBatch(requests=(), req_com=None, commit_rec=None,
                              round_no=round_no)

    req_com, aux = vec_commit(dests)
    commit_rec = make_commit_rec(state.keymat, round_no, req_com)
    full_table = state.config.retrieval_mode == FULL_TABLE
    nu = None if full_table else state.nu
    eta = None if full_table else state.eta
    nonce_sig = sign(state.keymat.net_sk, encode_nonces(nu, eta, round_no))
    reqs = []
    for ind, pk in enumerate(dests):
        req = Request(nu=nu, eta=eta, round_no=round_no, nonce_sig=nonce_sig,
                      commit_rec=commit_rec, opening_index=ind,
                      opening=vec_open(aux, ind), net_rec=state._net_rec)
        reqs.append((state.t_gsp[pk].net_rec.addr, req))
    return HeartbeatBatch(requests=tuple(reqs), req_com=req_com,
                          commit_rec=commit_rec, round_no=round_no)


def violator_begin_round(state: NodeState, round_no: int, now: int,
                         k: int) -> list[HeartbeatBatch]:
    """Adversarial variant: emit k batches under distinct commitments in one
    round, each covering a disjoint chunk of recipients. Sending any two of
    these is the slashable behavior."""
    if k < 2:
        raise ValueError("k=1 is honest behavior; a violator needs k >= 2")
    if round_no <= state.round:
        raise ValueError("rounds must advance")
    state.round = round_no
    state.nu = _fresh_seed(state._nu_rng)
    state.eta = _fresh_seed(state._eta_rng)
    state.new_unique_this_round = set()
    state._net_rec = make_net_rec(state.keymat, state.stake_com,
                                  state.own_stake_att, state.addr, now)
    cap = state.config.batch_cap
    ordered = sorted(state.t_gsp,
                     key=lambda pk: (prng_score(state.nu, pk), pk))
    if not ordered:
        return []
    # Disjoint chunks when the table is large enough; wraps around otherwise.
    chunks = [[ordered[(b * cap + i) % len(ordered)] for i in range(cap)]
              for b in range(k)]
    full_table = state.config.retrieval_mode == FULL_TABLE
    nu = None if full_table else state.nu
    eta = None if full_table else state.eta
    nonce_sig = sign(state.keymat.net_sk, encode_nonces(nu, eta, round_no))
    batches = []
    for chunk in chunks:
        req_com, aux = vec_commit(chunk)
        commit_rec = make_commit_rec(state.keymat, round_no, req_com)
        reqs = []
        seen = set()
        for ind, pk in enumerate(chunk):
            if pk in seen:
                continue
            seen.add(pk)
            req = Request(nu=nu, eta=eta, round_no=round_no, nonce_sig=nonce_sig,
                          commit_rec=commit_rec, opening_index=ind,
                          opening=vec_open(aux, ind), net_rec=state._net_rec)
            reqs.append((state.t_gsp[pk].net_rec.addr, req))
        batches.append(HeartbeatBatch(requests=tuple(reqs), req_com=req_com,
                                      commit_rec=commit_rec, round_no=round_no))
    return batches


def receive_record(state: NodeState, rec: PeerRec, now: int) -> ReceiveResult:
    """Validate and store a peer record; detect double commitments and, on a
    hit, recover the stake secret, slash on-chain, and deny-list the peer."""
    reason = validate_net_rec(rec.net_rec, state.accepted_roots(), now,
                              state.config.record_expiry, state.registry)
    if reason is not None:
        state.count(reason.value)
        return ReceiveResult(False, reason=reason)
    pk = rec.net_pk
    if pk == state.net_pk:
        return ReceiveResult(True)

    merged = rec
    existing = state.t_gsp.get(pk)
    if existing is not None:
        merged = merge_peer_rec(existing, merged)
    other = state.t_priv.get(pk)
    if other is not None and other is not existing:
        merged = merge_peer_rec(other, merged)

    slash_proof = None
    proof = detect_duplicate_commit(merged)
    if proof is not None and pk not in state.deny_list:
        if verify_slash_proof(proof, state.accepted_roots(), state.registry):
            slash_proof = proof
            stake_sk, stake_id = recover_from_slash_proof(proof)
            if state.chain is not None:
                try:
                    state.chain.slash(stake_sk, stake_id)
                except ChainError:
                    pass  # someone else slashed first
            state.deny_list[pk] = proof
            state.count("slash-detected")

    t = state.config.slice_threshold
    inserted = False
    if pk in state.t_gsp or prng_score(state.nu, pk) < t:
        if pk not in state.t_gsp:
            inserted = True
        state.t_gsp[pk] = merged
    if pk in state.t_priv or prng_score(state.eta, pk) < t:
        state.t_priv[pk] = merged

    # The flag statistic counts distinct identities newly added to the gossip
    # table this round; the private table does not feed it.
    if inserted:
        state.new_unique_this_round.add(pk)
    return ReceiveResult(True, slash_proof=slash_proof)


def respond(state: NodeState, req: Request, now: int) -> Response:
    """Handle one heartbeat request; raises RequestRejected with the cause
    on any failed check."""
    sender_pk = req.net_rec.net_pk
    # Ingest the sender's record first (pseudocode order: a rate-limited
    # sender still refreshes its record).
    res = receive_record(state, PeerRec(net_rec=req.net_rec,
                                        commits=((req.commit_rec, req.round_no),)),
                         now)
    if not res.accepted:
        raise RequestRejected(res.reason)

    # The round is defined by the shared clock, not by whether this node's
    # own heartbeat has fired yet; early-arriving requests are fine.
    if req.round_no != now // state.config.round_length:
        raise RequestRejected(Reject.STALE_ROUND)
    if not check_sig(sender_pk, encode_nonces(req.nu, req.eta, req.round_no),
                     req.nonce_sig, state.registry):
        raise RequestRejected(Reject.BAD_NONCE_SIG)
    if not vec_verify(req.commit_rec.req_com, req.opening_index,
                      state.net_pk, req.opening):
        raise RequestRejected(Reject.BAD_OPENING)
    if not 0 <= req.opening_index < state.config.batch_cap:
        raise RequestRejected(Reject.BAD_INDEX)
    if not records.verify_share_attestation(req.commit_rec.share_att, sender_pk,
                                            req.round_no, req.commit_rec.req_com,
                                            req.commit_rec.share, state.registry):
        raise RequestRejected(Reject.BAD_SHARE)

    seen = state.recent_reqs.setdefault(req.round_no, set())
    if sender_pk in seen:
        raise RequestRejected(Reject.RATE_LIMITED)
    if sender_pk in state.deny_list:
        raise RequestRejected(Reject.DENY_LISTED)
    seen.add(sender_pk)

    if state.config.retrieval_mode == FULL_TABLE:
        chosen = sorted(state.t_gsp)
    else:
        t = state.config.slice_threshold
        chosen = sorted(pk for pk in state.t_gsp
                        if prng_score(req.nu, pk) < t or prng_score(req.eta, pk) < t)
    peers = tuple(state.t_gsp[pk] for pk in chosen)
    proofs = tuple(state.deny_list[pk] for pk in sorted(state.deny_list))
    return Response(peers=peers, slash_proofs=proofs)


def handle_response(state: NodeState, resp: Response, now: int) -> None:
    """Absorb a heartbeat response: verify carried slash proofs, ingest the
    records, then evict expired and excess entries."""
    for sp in resp.slash_proofs:
        if verify_slash_proof(sp, state.accepted_roots(), state.registry):
            state.deny_list.setdefault(sp.net_pk, sp)
        else:
            state.count("bad-slash-proof")
    for rec in resp.peers:
        receive_record(state, rec, now)

    exp = state.config.record_expiry
    for table in (state.t_gsp, state.t_priv):
        for pk in [pk for pk, r in table.items() if now - r.net_rec.ts > exp]:
            del table[pk]

    cap = state.config.table_cap
    for table, seed in ((state.t_gsp, state.nu), (state.t_priv, state.eta)):
        if len(table) > cap:
            ranked = sorted(table, key=lambda pk: (prng_score(seed, pk), pk))
            for pk in ranked[cap:]:
                del table[pk]


def end_round_flag(state: NodeState) -> bool:
    """Raise the attack-detection flag when too few new identities arrived."""
    flag = len(state.new_unique_this_round) < \
        state.config.flag_threshold * state.config.s * math.sqrt(state.config.n)
    state.flag_history.append((state.round, flag))
    return flag


def epoch_transition(state: NodeState, chain: ContractState) -> None:
    """Adopt the new epoch commitment, regenerate the node's own stake
    attestation, and drop state keyed to commitments that left the window."""
    d = state.config.commitment_window
    new_com = chain.get_commitment()
    state.acc_coms.append(new_com)
    state.acc_coms = state.acc_coms[-d:]
    state.stake_com = new_com
    try:
        proof, _ = chain.get_proof(state.keymat.stake_id)
        state.own_stake_att = make_stake_attestation(state.keymat, new_com, proof)
        state.stalled = False
    except ChainError:
        # Slashed or withdrawn: no valid attestation, no further heartbeats.
        state.own_stake_att = None
        state.stalled = True
    roots = state.accepted_roots()
    state.deny_list = {pk: sp for pk, sp in state.deny_list.items()
                       if sp.stake_com.root in roots}
    state.recent_reqs = {r: v for r, v in state.recent_reqs.items()
                         if r >= state.round - 1}


def build_overlay(state: NodeState, rng: random.Random) -> set[bytes]:
    """Sample overlay neighbors: each private-table entry independently with
    probability overlay_prob."""
    p = state.config.overlay_prob
    return {pk for pk in sorted(state.t_priv) if rng.random() < p}
