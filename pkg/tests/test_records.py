import random

import pytest

from stakegossip.records import (MAX_COMMIT_ROUNDS, PeerRec, Reject, SlashProof,
                                 detect_duplicate_commit, merge_peer_rec,
                                 recover_from_slash_proof, validate_net_rec,
                                 verify_slash_proof)

from conftest import Fixture

EXP = 8_000


def test_validate_fresh_record_ok(net):
    rec = net.net_rec(0, ts=1_000)
    assert validate_net_rec(rec, net.roots, now=2_000, exp=EXP,
                            registry=net.registry) is None


def test_validate_expiry_boundary(net):
    rec = net.net_rec(0, ts=1_000)
    assert validate_net_rec(rec, net.roots, now=1_000 + EXP, exp=EXP,
                            registry=net.registry) is None
    assert validate_net_rec(rec, net.roots, now=1_000 + EXP + 1, exp=EXP,
                            registry=net.registry) is Reject.EXPIRED_RECORD


def test_validate_stale_commitment(net):
    rec = net.net_rec(0)
    # The d-window moved on: this record's commitment was evicted.
    assert validate_net_rec(rec, {b"\x00" * 32}, now=2_000, exp=EXP,
                            registry=net.registry) is Reject.STALE_COMMITMENT


def test_validate_bad_signature(net):
    rec = net.net_rec(0)
    forged = PeerRec(net_rec=rec).net_rec.__class__(
        net_pk=rec.net_pk, stake_com=rec.stake_com, stake_att=rec.stake_att,
        addr=rec.addr + b"x", ts=rec.ts, sig=rec.sig)
    assert validate_net_rec(forged, net.roots, now=2_000, exp=EXP,
                            registry=net.registry) is Reject.BAD_SIGNATURE


def test_validate_stolen_attestation(net):
    # Node 1 presents node 0's stake attestation under its own key.
    a, b = net.net_rec(0), net.net_rec(1)
    forged = b.__class__(net_pk=b.net_pk, stake_com=b.stake_com,
                         stake_att=a.stake_att, addr=b.addr, ts=b.ts, sig=b.sig)
    assert validate_net_rec(forged, net.roots, now=2_000, exp=EXP,
                            registry=net.registry) is Reject.BAD_ATTESTATION


def test_validation_monotone_until_expiry(net):
    rec = net.net_rec(0, ts=5_000)
    accepted_at = [t for t in range(5_000, 5_000 + EXP + 1, 500)
                   if validate_net_rec(rec, net.roots, t, EXP, net.registry) is None]
    assert accepted_at == list(range(5_000, 5_000 + EXP + 1, 500))


def test_merge_newest_wins(net):
    old = net.peer_rec(0, ts=5)
    new = net.peer_rec(0, ts=9)
    assert merge_peer_rec(old, new).net_rec.ts == 9
    assert merge_peer_rec(new, old).net_rec.ts == 9


def test_merge_tie_keeps_existing(net):
    a = net.peer_rec(0, ts=5, addr=b"addr-a")
    b = net.peer_rec(0, ts=5, addr=b"addr-b")
    assert merge_peer_rec(a, b).net_rec.addr == b"addr-a"


def test_merge_unions_commits(net):
    a = net.peer_rec(0, ts=5, commit_tags=[(3, 1)])
    b = net.peer_rec(0, ts=6, commit_tags=[(3, 2)])
    merged = merge_peer_rec(a, b)
    assert len(merged.commits) == 2
    assert {rnd for _, rnd in merged.commits} == {3}


def test_merge_commutative_up_to_ties(net):
    a = net.peer_rec(0, ts=5, commit_tags=[(3, 1)])
    b = net.peer_rec(0, ts=9, commit_tags=[(4, 2)])
    ab = merge_peer_rec(a, b)
    ba = merge_peer_rec(b, a)
    assert ab == ba  # distinct timestamps: fully order-independent
    # equal timestamps differ only in which net_rec wins the tie
    c = net.peer_rec(0, ts=5, addr=b"other")
    assert merge_peer_rec(a, c).commits == merge_peer_rec(c, a).commits


def test_merge_idempotent(net):
    a = net.peer_rec(0, ts=5, commit_tags=[(3, 1), (4, 2)])
    m = merge_peer_rec(a, a)
    assert m.net_rec == a.net_rec
    assert set(m.commits) == set(a.commits)


def test_merge_different_identities_rejected(net):
    with pytest.raises(ValueError):
        merge_peer_rec(net.peer_rec(0), net.peer_rec(1))


def test_merge_never_shrinks_within_window(net):
    a = net.peer_rec(0, ts=1, commit_tags=[(10, 1), (11, 2)])
    b = net.peer_rec(0, ts=2, commit_tags=[(12, 3)])
    merged = merge_peer_rec(a, b)
    keys = {(rnd, cr.req_com.root) for cr, rnd in a.commits + b.commits}
    assert {(rnd, cr.req_com.root) for cr, rnd in merged.commits} == keys


def test_merge_commit_window_cap(net):
    tags = [(r, r) for r in range(1, MAX_COMMIT_ROUNDS + 3)]
    a = net.peer_rec(0, ts=1, commit_tags=tags)
    merged = merge_peer_rec(a, net.peer_rec(0, ts=2))
    rounds = sorted({rnd for _, rnd in merged.commits})
    assert len(rounds) == MAX_COMMIT_ROUNDS
    assert rounds[0] == 3  # the two oldest rounds dropped


def test_detect_duplicate_same_round(net):
    rec = net.peer_rec(0, commit_tags=[(3, 1), (3, 2)])
    proof = detect_duplicate_commit(rec)
    assert proof is not None
    assert proof.round_no == 3
    assert proof.cr1.req_com.root != proof.cr2.req_com.root


def test_detect_same_commit_across_rounds_legal(net):
    a = net.peer_rec(0, commit_tags=[(3, 1)])
    b = net.peer_rec(0, ts=2_000, commit_tags=[(4, 1)])
    merged = merge_peer_rec(a, b)
    assert detect_duplicate_commit(merged) is None


def test_detect_distinct_commits_distinct_rounds_legal(net):
    rec = net.peer_rec(0, commit_tags=[(3, 1), (4, 2)])
    assert detect_duplicate_commit(rec) is None


def test_verify_slash_proof_genuine(net):
    rec = net.peer_rec(0, commit_tags=[(3, 1), (3, 2)])
    proof = detect_duplicate_commit(rec)
    assert verify_slash_proof(proof, net.roots, net.registry)


def test_verify_slash_proof_equal_commitments(net):
    rec = net.peer_rec(0, commit_tags=[(3, 1), (3, 2)])
    p = detect_duplicate_commit(rec)
    degenerate = SlashProof(net_pk=p.net_pk, stake_com=p.stake_com,
                            round_no=p.round_no, cr1=p.cr1, cr2=p.cr1)
    assert not verify_slash_proof(degenerate, net.roots, net.registry)


def test_verify_slash_proof_purged_commitment(net):
    rec = net.peer_rec(0, commit_tags=[(3, 1), (3, 2)])
    proof = detect_duplicate_commit(rec)
    assert not verify_slash_proof(proof, {b"\x11" * 32}, net.registry)


def test_verify_slash_proof_foreign_key(net):
    # Evidence reassigned to another identity must not verify.
    rec = net.peer_rec(0, commit_tags=[(3, 1), (3, 2)])
    p = detect_duplicate_commit(rec)
    forged = SlashProof(net_pk=net.keymats[1].net_pk, stake_com=p.stake_com,
                        round_no=p.round_no, cr1=p.cr1, cr2=p.cr2)
    assert not verify_slash_proof(forged, net.roots, net.registry)


def test_recovery_matches_violator_key(net):
    rec = net.peer_rec(0, commit_tags=[(3, 1), (3, 2)])
    proof = detect_duplicate_commit(rec)
    stake_sk, stake_id = recover_from_slash_proof(proof)
    assert stake_sk == net.keymats[0].stake_sk
    assert stake_id == net.keymats[0].stake_id


def test_recovery_equal_commitments_precondition(net):
    rec = net.peer_rec(0, commit_tags=[(3, 1), (3, 2)])
    p = detect_duplicate_commit(rec)
    bad = SlashProof(net_pk=p.net_pk, stake_com=p.stake_com,
                     round_no=p.round_no, cr1=p.cr1, cr2=p.cr1)
    with pytest.raises(ValueError):
        recover_from_slash_proof(bad)


def test_recovery_property_scan():
    # 100 violators across random rounds: recovery is exact every time.
    fx = Fixture(count=1)
    rng = random.Random(9)
    for trial in range(100):
        rnd = rng.randrange(1, 1 << 30)
        rec = fx.peer_rec(0, commit_tags=[(rnd, 2 * trial), (rnd, 2 * trial + 1)])
        proof = detect_duplicate_commit(rec)
        assert verify_slash_proof(proof, fx.roots, fx.registry)
        stake_sk, stake_id = recover_from_slash_proof(proof)
        assert stake_sk == fx.keymats[0].stake_sk
        assert stake_id == fx.keymats[0].stake_id


def test_honest_records_never_slashable_under_merge_fuzz(net):
    # Data-level slashing soundness: one commitment per round, any
    # adversarial merge order; 10^4 sequences.
    rng = random.Random(42)
    base = [net.peer_rec(0, ts=10 * r, commit_tags=[(r, r)]) for r in range(8)]
    for _ in range(10_000):
        seq = [rng.choice(base) for _ in range(rng.randrange(1, 6))]
        acc = seq[0]
        for rec in seq[1:]:
            acc = merge_peer_rec(acc, rec)
        proof = detect_duplicate_commit(acc)
        assert proof is None or not verify_slash_proof(proof, net.roots,
                                                       net.registry)


def test_encodings_deterministic(net):
    a = net.peer_rec(0, commit_tags=[(3, 1)])
    b = net.peer_rec(0, commit_tags=[(3, 1)])
    assert a.encode() == b.encode()
    assert a.encode() != net.peer_rec(1).encode()
