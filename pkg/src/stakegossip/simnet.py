"""Seeded network simulator.

Two drivers share the protocol modules:

* `World` is the experiment engine. Per-node state lives in dense numpy
  matrices and each round advances in phases (churn, round starts, record
  injection, response ingest, maintenance), with slice selection evaluated
  through the exact vectorized PRNG. Honest traffic is tracked symbolically
  (a record version is identified by its origin and creation round);
  slashing evidence, the staking contract, and deny lists run through the
  real `records`/`chain` code paths.

* `MicroNet` drives full `node.NodeState` machines message by message,
  including every cryptographic check. It is the reference implementation
  for protocol-level tests and for cross-checking the engine at small n.

Runs are bit-reproducible: all randomness flows from the configured seed
through counter-based Philox streams keyed per purpose and round, so results
are independent of host and worker count.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import random as _pyrandom
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import balanced_theta
from .chain import ChainError, ContractState, ProtocolParams
from .crypto import (IdentityRegistry, derive_identity, id_key,
                     prng_mask_vec, prng_scores_vec)
from .merkle import vec_commit
from .node import (SEED_IN_REQUEST, NodeConfig, RequestRejected, begin_round,
                   end_round_flag, handle_response, make_node, respond,
                   violator_begin_round)
from .records import (CommitRec, PeerRec, Response, SlashProof, make_commit_rec,
                      make_net_rec, recover_from_slash_proof,
                      verify_slash_proof)

HONEST = 0
SILENT = 1
FILTERING = 2
OVERSAMPLER = 3

_ADV_ROLE = {"silent": SILENT, "filtering": FILTERING,
             "oversampler": OVERSAMPLER}


@dataclass(frozen=True)
class SimConfig:
    n: int
    s: float = 4.0
    alpha: float = 0.0
    rounds: int = 10
    round_length: int = 2_000
    delay_min: int = 20
    delay_max: int = 250
    churn_rate: int = 0
    adversary: str = "none"            # none | silent | filtering | oversampler
    oversample_k: int = 2
    theta: float | None = None         # default: balanced_theta(alpha, 0.9)
    seed: int = 0
    retrieval_mode: str = SEED_IN_REQUEST
    warm_start: bool = True
    table_cap_slack: float = 0.2
    expiry_rounds: int = 4
    epoch_rounds: int = 0              # 0: no epoch boundary within the run
    commitment_window: int = 2
    partition_frac: float | None = None  # fraction of honest nodes on side A
    track_node: int | None = None      # trace per-round visibility of one pk

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("need at least 3 nodes")
        if not 0 < self.s / math.sqrt(self.n) < 1:
            raise ValueError("slice threshold s/sqrt(n) must lie in (0, 1)")
        if not 0 <= self.alpha < 1:
            raise ValueError("adversary stake fraction must lie in [0, 1)")
        if self.delay_min > self.delay_max:
            raise ValueError("delay_min must be <= delay_max")
        if self.adversary != "none" and self.adversary not in _ADV_ROLE:
            raise ValueError(f"unknown adversary {self.adversary!r}")
        if self.partition_frac is not None and not 0 < self.partition_frac <= 0.5:
            raise ValueError("side A holds at most half of the honest nodes")
        if self.rounds < 1:
            raise ValueError("need at least one round")

    @property
    def theta_eff(self) -> float:
        return self.theta if self.theta is not None else balanced_theta(self.alpha, 0.90)

    @property
    def n_adv(self) -> int:
        return math.ceil(self.alpha * self.n)

    @property
    def slice_threshold(self) -> float:
        return self.s / math.sqrt(self.n)

    @property
    def batch_cap(self) -> int:
        return math.ceil(self.s * math.sqrt(self.n))

    @property
    def table_cap(self) -> int:
        return math.ceil((1 + self.table_cap_slack) * self.s * math.sqrt(self.n))


@dataclass(frozen=True, order=True)
class Event:
    """Simulation event. Queues process events in (time, sequence) order;
    the sequence counter is assigned at insertion, which makes runs
    bit-reproducible for a fixed seed."""
    time: int
    sequence: int
    kind: str = field(compare=False)  # round-start | deliver | churn | epoch-boundary | snapshot
    node: int | None = field(default=None, compare=False)
    payload: object = field(default=None, compare=False)


@dataclass
class Metrics:
    """Per-round series over a run. Index 0 is the warm-start state; rounds
    are 1-based."""

    rounds: int
    record_correctness: np.ndarray = None
    table_quality: np.ndarray = None
    flag_rate: np.ndarray = None
    flag_rate_side_a: np.ndarray = None
    flag_rate_side_b: np.ndarray = None
    representation_honest: np.ndarray = None
    representation_adv: np.ndarray = None
    new_unique_mean: np.ndarray = None
    visibility: np.ndarray = None
    detection_round: dict[int, int] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        r = self.rounds + 1
        for name in ("record_correctness", "table_quality", "flag_rate",
                     "flag_rate_side_a", "flag_rate_side_b",
                     "representation_honest", "representation_adv",
                     "new_unique_mean", "visibility"):
            if getattr(self, name) is None:
                setattr(self, name, np.full(r, np.nan))


def _stream(seed: int, purpose: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, purpose & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _node_secret(seed: int, i: int) -> bytes:
    return hashlib.blake2b(b"sg/node-secret"
                           + (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "big")
                           + i.to_bytes(8, "big"), digest_size=32).digest()


class World:
    """Vectorized experiment engine over columnar node state."""

    def __init__(self, config: SimConfig, bootstrap_contact: int | None = None):
        self.cfg = config
        n = config.n
        self.registry = IdentityRegistry()
        params = ProtocolParams(
            epoch_length=(config.epoch_rounds or 10 ** 9) * config.round_length,
            freeze=config.round_length // 2,
            withdraw_delay=config.round_length,
            record_expiry=config.expiry_rounds * config.round_length,
            commitment_window=config.commitment_window,
            round_length=config.round_length)
        self.chain = ContractState(params=params)

        self.keymats = [derive_identity(_node_secret(config.seed, i))
                        for i in range(n)]
        for i, km in enumerate(self.keymats):
            self.registry.register(km)
            self.chain.deposit_and_stake(km.stake_id, 1, b"acct-%d" % i)
        self.chain.advance_clock(params.epoch_length)  # activate genesis stake

        self.id_keys = np.array([id_key(km.net_pk) for km in self.keymats],
                                dtype=np.uint64)
        self.role = np.zeros(n, dtype=np.int8)
        if config.adversary != "none" and config.n_adv:
            self.role[n - config.n_adv:] = _ADV_ROLE[config.adversary]
        self.honest = self.role == HONEST
        self.adv = ~self.honest

        # Partition sides. The alpha-fraction of staked nodes straddles the
        # cut (visible to and serving both sides); honest nodes split A/B.
        self.side = np.zeros(n, dtype=np.int8)
        self.partitioned = config.partition_frac is not None
        if self.partitioned:
            straddle = config.n_adv
            split_idx = np.flatnonzero(self.role == HONEST)
            if straddle and config.adversary == "none":
                split_idx = split_idx[:n - straddle]
                self.side[n - straddle:] = 0
            k = max(1, int(round(config.partition_frac * split_idx.size)))
            self.side[split_idx[:k]] = 1
            self.side[split_idx[k:]] = 2

        # Held-record state. A version is (origin, creation round, variant);
        # seen_round == -1 means nothing held.
        self.in_gsp = np.zeros((n, n), dtype=bool)
        self.in_priv = np.zeros((n, n), dtype=bool)
        self.seen_round = np.full((n, n), -1, dtype=np.int32)
        self.variant = np.zeros((n, n), dtype=np.int8)
        self.last_churn = np.zeros(n, dtype=np.int32)

        self.joiner = 0 if bootstrap_contact is not None else None
        self._warm_start(bootstrap_contact)

        # Oversampler bookkeeping: real commit records per (violator, round,
        # batch), the first verifying proof, and per-node proof possession.
        self.commit_recs: dict[tuple[int, int, int], CommitRec] = {}
        self.slash_proofs: dict[int, SlashProof] = {}
        self.has_proof: dict[int, np.ndarray] = {}

        self.metrics = Metrics(rounds=config.rounds)
        self.counters = self.metrics.counters
        self._round = 0
        self._u_count = np.zeros(n, dtype=np.int64)
        self._flagged = np.zeros(n, dtype=bool)
        self.mask_nu = np.zeros((n, n), dtype=bool)
        self._measure(0)

    # -- construction --------------------------------------------------------

    def _warm_start(self, bootstrap_contact: int | None) -> None:
        cfg = self.cfg
        n = cfg.n
        if cfg.warm_start:
            rng = _stream(cfg.seed, 0)
            nu0 = rng.integers(0, 2 ** 63, size=n, dtype=np.uint64)
            eta0 = rng.integers(0, 2 ** 63, size=n, dtype=np.uint64)
            for i in range(n):
                self.in_gsp[i] = prng_mask_vec(int(nu0[i]), self.id_keys,
                                               cfg.slice_threshold)
                self.in_priv[i] = prng_mask_vec(int(eta0[i]), self.id_keys,
                                                cfg.slice_threshold)
            np.fill_diagonal(self.in_gsp, False)
            np.fill_diagonal(self.in_priv, False)
            self.seen_round[self.in_gsp | self.in_priv] = 0
        if self.joiner is not None:
            j = self.joiner
            self.in_gsp[j, :] = False
            self.in_priv[j, :] = False
            self.in_gsp[:, j] = False
            self.in_priv[:, j] = False
            self.seen_round[j, :] = -1
            self.seen_round[:, j] = -1
            self.in_gsp[j, bootstrap_contact] = True
            self.in_priv[j, bootstrap_contact] = True
            self.seen_round[j, bootstrap_contact] = 0

    # -- round loop ----------------------------------------------------------

    def run(self) -> Metrics:
        for _ in range(self.cfg.rounds):
            self.step()
        return self.metrics

    def step(self) -> None:
        cfg = self.cfg
        n = cfg.n
        r = self._round = self._round + 1

        # Phase 1: churn, applied at the round start so the churned node's
        # own heartbeat this round already carries the fresh address.
        if cfg.churn_rate:
            rng = _stream(cfg.seed, (1 << 32) + r)
            churned = rng.choice(n, size=min(cfg.churn_rate, n), replace=False)
            self.last_churn[churned] = r
            self._bump("churn_events", churned.size)

        # Phase 2: fresh slice seeds and request targets.
        rng_seeds = _stream(cfg.seed, (2 << 32) + r)
        self.nu_keys = rng_seeds.integers(0, 2 ** 63, size=n, dtype=np.uint64)
        self.eta_keys = rng_seeds.integers(0, 2 ** 63, size=n, dtype=np.uint64)
        thr = cfg.slice_threshold
        mask_nu = np.empty((n, n), dtype=bool)
        mask_eta = np.empty((n, n), dtype=bool)
        for i in range(n):
            mask_nu[i] = prng_mask_vec(int(self.nu_keys[i]), self.id_keys, thr)
            mask_eta[i] = prng_mask_vec(int(self.eta_keys[i]), self.id_keys, thr)
        np.fill_diagonal(mask_nu, False)
        np.fill_diagonal(mask_eta, False)
        self.mask_nu, self.mask_eta = mask_nu, mask_eta
        mask_union = mask_nu | mask_eta

        self._u_count = np.zeros(n, dtype=np.int64)
        snd, dst, var = self._build_requests(r)
        self._bump("requests_sent", snd.size)
        if self.partitioned:
            ss, ds = self.side[snd], self.side[dst]
            keep = ~((ss != ds) & (ss != 0) & (ds != 0))
            self._bump("requests_dropped", int((~keep).sum()))
            snd, dst, var = snd[keep], dst[keep], var[keep]
        self._bump("requests_delivered", snd.size)

        # Phase 3: injection. Responders ingest the sender's fresh record
        # before any further check (a rate-limited or denied sender still
        # refreshes its record, matching the response pseudocode order).
        inj = self.honest[dst]
        flat = dst[inj].astype(np.int64) * n + snd[inj]
        np.maximum.at(self.seen_round.ravel(), flat, r)
        self.variant.ravel()[flat] = var[inj]
        arrived = np.zeros((n, n), dtype=bool)
        arrived.ravel()[flat] = True
        ins_g = arrived & mask_nu & ~self.in_gsp
        self.in_gsp |= ins_g
        self._u_count += ins_g.sum(axis=1)
        self.in_priv |= arrived & mask_eta & ~self.in_priv

        # Phase 4: snapshot the tables as served this round.
        valid_from = r - cfg.expiry_rounds
        v_snap = np.where(self.in_gsp & (self.seen_round >= valid_from),
                          self.seen_round, -1).astype(np.int32)
        var_snap = self.variant.copy()
        proof_snap = {v: h.copy() for v, h in self.has_proof.items()}

        # Phase 5: responses, ingested per requester. Response content is
        # the responder's served table restricted to the requester's slice;
        # merging is commutative, so arrival order within the round does not
        # change the outcome.
        by_sender = np.argsort(snd, kind="stable")
        snd_sorted, dst_sorted = snd[by_sender], dst[by_sender]
        bounds = np.searchsorted(snd_sorted, np.arange(n + 1))
        violators = np.flatnonzero(self.role == OVERSAMPLER)
        responses_sent = 0
        denials = 0
        for i in range(n):
            tg = dst_sorted[bounds[i]:bounds[i + 1]]
            if tg.size == 0:
                continue
            if i in proof_snap:  # a detected violator: proof holders refuse
                refused = proof_snap[i][tg]
                denials += int(refused.sum())
                tg = tg[~refused]
            resp_tg = tg[self.role[tg] == HONEST]
            filt_tg = tg[self.role[tg] == FILTERING]
            responses_sent += resp_tg.size + filt_tg.size
            if not self.honest[i]:
                continue  # adversarial views are not tracked
            slice_cols = np.flatnonzero(mask_union[i])
            if slice_cols.size == 0:
                continue
            got = np.full(slice_cols.size, -1, dtype=np.int32)
            got_var = np.zeros(slice_cols.size, dtype=np.int8)
            straddle_tg = np.empty(0, dtype=resp_tg.dtype)
            if self.partitioned and self.side[i] != 0:
                # The cut-maintaining adversary answers both sides but
                # withholds records from across the cut.
                straddle_tg = resp_tg[self.side[resp_tg] == 0]
                resp_tg = resp_tg[self.side[resp_tg] == self.side[i]]
            if resp_tg.size:
                sub = v_snap[np.ix_(resp_tg, slice_cols)]
                np.max(sub, axis=0, out=got)
                if violators.size:
                    self._detect_violators(i, resp_tg, slice_cols, sub,
                                           var_snap, got_var)
            if straddle_tg.size:
                other = 3 - self.side[i]
                allowed = self.side[slice_cols] != other
                sub_s = v_snap[np.ix_(straddle_tg, slice_cols)].max(axis=0)
                np.maximum(got, np.where(allowed, sub_s, -1), out=got)
            if filt_tg.size:
                got = np.where(self.adv[slice_cols], np.maximum(got, r), got)
            got[got < valid_from] = -1
            improved = got > self.seen_round[i, slice_cols]
            cols_imp = slice_cols[improved]
            self.seen_round[i, cols_imp] = got[improved]
            self.variant[i, cols_imp] = got_var[improved]
            arrived_cols = slice_cols[got >= 0]
            ins = self.mask_nu[i, arrived_cols] & ~self.in_gsp[i, arrived_cols]
            self.in_gsp[i, arrived_cols[ins]] = True
            self._u_count[i] += int(ins.sum())
            ins_p = self.mask_eta[i, arrived_cols] & ~self.in_priv[i, arrived_cols]
            self.in_priv[i, arrived_cols[ins_p]] = True
            # Verified slash proofs ride along on responses (one hop/round).
            for v, holders in proof_snap.items():
                if resp_tg.size and holders[resp_tg].any():
                    self.has_proof[v][i] = True
        self._bump("responses_sent", responses_sent)
        self._bump("responses_delivered", responses_sent)
        self._bump("deny_rejections", denials)

        # Phase 6: maintenance, flags, metrics, epoch boundaries.
        self._expire_and_evict(r)
        thr_flag = cfg.theta_eff * cfg.s * math.sqrt(cfg.n)
        self._flagged = self._u_count < thr_flag
        self._measure(r)
        if cfg.epoch_rounds:
            self.chain.advance_clock(cfg.round_length)

    # -- phase helpers -------------------------------------------------------

    def _build_requests(self, r: int):
        cfg = self.cfg
        n = cfg.n
        senders, dests, variants = [], [], []
        rng_targets = _stream(cfg.seed, (3 << 32) + r)
        for i in range(n):
            if self.role[i] == OVERSAMPLER:
                others = np.delete(np.arange(n), i)
                want = min(cfg.oversample_k * cfg.batch_cap, others.size)
                tg = rng_targets.choice(others, size=want, replace=False)
                var = (np.arange(want) // cfg.batch_cap).astype(np.int8)
                self._materialize_violator_commits(i, r, int(var.max()) + 1)
            else:
                tg = np.flatnonzero(self.in_gsp[i])
                if tg.size > cfg.batch_cap:
                    scores = prng_scores_vec(int(self.nu_keys[i]),
                                             self.id_keys[tg])
                    tg = tg[np.argsort(scores, kind="stable")[:cfg.batch_cap]]
                var = np.zeros(tg.size, dtype=np.int8)
            if tg.size:
                senders.append(np.full(tg.size, i, dtype=np.int32))
                dests.append(tg.astype(np.int32))
                variants.append(var)
        if not senders:
            return (np.empty(0, np.int32), np.empty(0, np.int32),
                    np.empty(0, np.int8))
        return (np.concatenate(senders), np.concatenate(dests),
                np.concatenate(variants))

    def _materialize_violator_commits(self, v: int, r: int, k: int) -> None:
        km = self.keymats[v]
        for b in range(k):
            leaf = b.to_bytes(4, "big") + r.to_bytes(8, "big") + bytes(20)
            com, _ = vec_commit([leaf])
            self.commit_recs[(v, r, b)] = make_commit_rec(km, r, com)

    def _detect_violators(self, i: int, resp_tg, slice_cols, sub,
                          var_snap, got_var) -> None:
        """Scan served versions of violator identities for two distinct
        batch commitments in one round; build and verify real evidence."""
        for v in np.flatnonzero(self.role == OVERSAMPLER):
            pos = int(np.searchsorted(slice_cols, v))
            if pos >= slice_cols.size or slice_cols[pos] != v:
                continue
            col = sub[:, pos]
            valid = col >= 0
            if not valid.any():
                continue
            vr = col[valid]
            vv = var_snap[resp_tg[valid], v]
            top = int(vr.max())
            top_vars = vv[vr == top]
            got_var[pos] = top_vars.max()
            seen = set(int(x) for x in top_vars)
            if self.seen_round[i, v] == top:
                seen.add(int(self.variant[i, v]))
            if len(seen) > 1:
                a, b = sorted(seen)[:2]
                self._record_detection(i, v, top, a, b)

    def _record_detection(self, i: int, v: int, rnd: int, b1: int, b2: int) -> None:
        if v not in self.has_proof:
            self.has_proof[v] = np.zeros(self.cfg.n, dtype=bool)
        self.has_proof[v][i] = True
        if v in self.slash_proofs:
            return
        proof = SlashProof(net_pk=self.keymats[v].net_pk,
                           stake_com=self.chain.get_commitment(),
                           round_no=rnd,
                           cr1=self.commit_recs[(v, rnd, b1)],
                           cr2=self.commit_recs[(v, rnd, b2)])
        roots = {self.chain.get_commitment().root}
        if not verify_slash_proof(proof, roots, self.registry):
            self._bump("bad_slash_proof", 1)
            return
        stake_sk, stake_id = recover_from_slash_proof(proof)
        try:
            self.chain.slash(stake_sk, stake_id)
        except ChainError:
            pass
        self.slash_proofs[v] = proof
        self.metrics.detection_round[v] = self._round

    def _expire_and_evict(self, r: int) -> None:
        # Maintenance applies to protocol-following (honest) rows only;
        # adversarial rows are static out-of-band target lists.
        cfg = self.cfg
        hon = self.honest
        expired = self.seen_round[hon] < r - cfg.expiry_rounds
        self.in_gsp[hon] &= ~expired
        self.in_priv[hon] &= ~expired
        cap = cfg.table_cap
        for table, keys in ((self.in_gsp, self.nu_keys),
                            (self.in_priv, self.eta_keys)):
            sizes = table.sum(axis=1)
            for i in np.flatnonzero(sizes > cap):
                if not self.honest[i]:
                    continue
                idx = np.flatnonzero(table[i])
                scores = prng_scores_vec(int(keys[i]), self.id_keys[idx])
                drop = idx[np.argpartition(scores, cap)[cap:]]
                table[i, drop] = False

    def _bump(self, key: str, amount: int) -> None:
        if amount:
            self.counters[key] = self.counters.get(key, 0) + int(amount)

    def _measure(self, r: int) -> None:
        m = self.metrics
        hon = self.honest.copy()
        if self.joiner is not None:
            hon[self.joiner] = False  # the joiner is traced separately
        held = (self.in_gsp | self.in_priv)[hon]
        correct_all = self.seen_round >= self.last_churn[None, :]
        total = int(held.sum())
        m.record_correctness[r] = \
            float((held & correct_all[hon]).sum() / total) if total else 1.0

        if r > 0:
            sl = self.mask_nu[hon][:, hon]
            good = (self.in_gsp & correct_all)[hon][:, hon]
            num = (sl & good).sum(axis=1)
            den = sl.sum(axis=1)
            ok = den > 0
            m.table_quality[r] = float((num[ok] / den[ok]).mean()) if ok.any() else np.nan
            m.flag_rate[r] = float(self._flagged[hon].mean()) if hon.any() else np.nan
            m.new_unique_mean[r] = float(self._u_count[hon].mean()) if hon.any() else np.nan
            if self.partitioned:
                a, b = self.side == 1, self.side == 2
                m.flag_rate_side_a[r] = float(self._flagged[a].mean()) if a.any() else np.nan
                m.flag_rate_side_b[r] = float(self._flagged[b].mean()) if b.any() else np.nan

        gsp_h = self.in_gsp[hon]
        tot = int(gsp_h.sum())
        if tot:
            adv_frac = float(gsp_h[:, self.adv].sum() / tot)
        else:
            adv_frac = 0.0
        m.representation_adv[r] = adv_frac
        m.representation_honest[r] = 1.0 - adv_frac

        if self.cfg.track_node is not None:
            t = self.cfg.track_node
            others = self.honest.copy()
            others[t] = False
            denom = int(others.sum())
            m.visibility[r] = \
                float(self.in_gsp[others, t].sum() / denom) if denom else 0.0


def run(config: SimConfig) -> Metrics:
    """Run one experiment; deterministic for a fixed config (incl. seed)."""
    return World(config).run()


def apply_churn(world: World, node_idx: int) -> None:
    """Replace one node's network address mid-run; peers' stored records for
    it become incorrect until its next heartbeat propagates."""
    world.last_churn[node_idx] = max(world._round, 1)


def run_bootstrap_experiment(config: SimConfig,
                             bootstrap_contact: int = 1) -> np.ndarray:
    """A warm network plus one cold joiner (node 0) knowing only the
    bootstrap contact. Returns the per-round count of honest nodes holding
    the joiner's record in their gossip tables."""
    cfg = replace(config, track_node=0)
    world = World(cfg, bootstrap_contact=bootstrap_contact)
    m = world.run()
    watchers = int(world.honest.sum()) - 1  # honest nodes besides the joiner
    return m.visibility * watchers


def run_partition_experiment(config: SimConfig, split: float) -> Metrics:
    """Honest nodes split into isolated sides A (a `split` fraction) and B;
    the alpha-fraction of staked nodes straddles the cut and serves both.
    Cross-side messages between A and B are dropped."""
    cfg = replace(config, partition_frac=split)
    return World(cfg).run()


# ---------------------------------------------------------------------------
# Reference driver


class MicroNet:
    """Small-scale reference network driving full NodeState machines.

    Every message takes the complete protocol code path, including all
    cryptographic checks. Deliveries are processed in (arrival, sequence)
    order within each round.
    """

    def __init__(self, n: int, s: float, seed: int = 0,
                 retrieval_mode: str = SEED_IN_REQUEST,
                 record_expiry_rounds: int = 4, round_length: int = 2_000,
                 theta: float = 0.75, warm_frac: float = 1.0,
                 capture_transcripts: bool = False,
                 eta_seed_override: dict[int, int] | None = None):
        self.n = n
        self.s = s
        self.round_length = round_length
        self.registry = IdentityRegistry()
        params = ProtocolParams(epoch_length=10 ** 9 * round_length,
                                freeze=round_length // 2,
                                withdraw_delay=round_length,
                                record_expiry=record_expiry_rounds * round_length,
                                round_length=round_length)
        self.chain = ContractState(params=params)
        self.config = NodeConfig(n=n, s=s, flag_threshold=theta,
                                 retrieval_mode=retrieval_mode,
                                 record_expiry=record_expiry_rounds * round_length,
                                 round_length=round_length)
        keymats = [derive_identity(_node_secret(seed, i)) for i in range(n)]
        for i, km in enumerate(keymats):
            self.chain.deposit_and_stake(km.stake_id, 1, b"acct-%d" % i)
        self.chain.advance_clock(params.epoch_length)
        overrides = eta_seed_override or {}
        self.nodes = [make_node(km, b"addr-%d-0" % i, self.config, self.registry,
                                self.chain, nu_seed=seed * 1_000_003 + i,
                                eta_seed=overrides.get(i, seed * 2_000_003 + i))
                      for i, km in enumerate(keymats)]
        self.rng = _pyrandom.Random(seed ^ 0x5EED)
        self.round = 0
        self.now = 0
        self.transcripts: dict[int, list[bytes]] | None = \
            {i: [] for i in range(n)} if capture_transcripts else None
        self.rejections: dict[str, int] = {}
        self._addr_to_node = {nd.addr: i for i, nd in enumerate(self.nodes)}
        if warm_frac > 0:
            self._warm(warm_frac)

    def _warm(self, frac: float) -> None:
        recs = [PeerRec(net_rec=make_net_rec(nd.keymat, nd.stake_com,
                                             nd.own_stake_att, nd.addr, 0))
                for nd in self.nodes]
        cap = self.config.table_cap
        for i, nd in enumerate(self.nodes):
            others = [j for j in range(self.n) if j != i]
            self.rng.shuffle(others)
            take = max(1, int(frac * min(cap, len(others))))
            for j in others[:take]:
                nd.t_gsp[recs[j].net_pk] = recs[j]
            self.rng.shuffle(others)
            for j in others[:take]:
                nd.t_priv[recs[j].net_pk] = recs[j]

    def _delay(self) -> int:
        return self.rng.randint(20, 250)

    def churn(self, i: int) -> None:
        nd = self.nodes[i]
        del self._addr_to_node[nd.addr]
        nd.addr = b"addr-%d-%d" % (i, self.round + 1)
        self._addr_to_node[nd.addr] = i

    def _push(self, time: int, kind: str, node: int | None = None,
              payload=None) -> None:
        heapq.heappush(self._queue, Event(time=time, sequence=self._seq,
                                          kind=kind, node=node,
                                          payload=payload))
        self._seq += 1

    def run_round(self, violators: dict[int, int] | None = None,
                  churned: list[int] = ()) -> None:
        """One heartbeat round through the event queue; `violators` maps
        node index -> batch count."""
        violators = violators or {}
        self.round += 1
        base = self.round * self.round_length
        self._queue: list[Event] = []
        self._seq = 0
        for i in churned:
            self._push(base, "churn", node=i)
        for i in range(self.n):
            self._push(base + self.rng.randint(0, self.round_length // 10),
                       "round-start", node=i)
        self._push(base + self.round_length, "snapshot")
        while self._queue:
            ev = heapq.heappop(self._queue)
            if ev.kind == "churn":
                self.churn(ev.node)
            elif ev.kind == "round-start":
                nd = self.nodes[ev.node]
                if ev.node in violators:
                    batches = violator_begin_round(nd, self.round, ev.time,
                                                   violators[ev.node])
                else:
                    batches = [begin_round(nd, self.round, ev.time)]
                for batch in batches:
                    for addr, req in batch.requests:
                        self._push(ev.time + self._delay(), "deliver",
                                   node=ev.node, payload=(addr, req))
                        if self.transcripts is not None:
                            self.transcripts[ev.node].append(req.encode())
            elif ev.kind == "deliver":
                addr, msg = ev.payload
                if isinstance(msg, Response):
                    handle_response(self.nodes[ev.node], msg, ev.time)
                    continue
                di = self._addr_to_node.get(addr)
                if di is None:
                    continue  # stale address: the peer churned away
                try:
                    resp = respond(self.nodes[di], msg, ev.time)
                except RequestRejected as e:
                    self.rejections[e.reason.value] = \
                        self.rejections.get(e.reason.value, 0) + 1
                    continue
                if self.transcripts is not None:
                    self.transcripts[di].append(resp.encode())
                self._push(ev.time + self._delay(), "deliver", node=ev.node,
                           payload=(None, resp))
            elif ev.kind == "snapshot":
                for nd in self.nodes:
                    if nd.round == self.round:
                        end_round_flag(nd)
        self.now = base + self.round_length
