"""Simulated on-chain staking contract and epoch clock.

Deposits and unstake requests queue until the next epoch boundary; both are
frozen shortly before the boundary so participants can fetch the upcoming
commitment. Withdrawn stake stays slashable through a delay window after the
boundary. The contract maintains a vector commitment over the active stake
identifiers, rebuilt at every boundary.

All stake units are 1. The clock is simulation-controlled integer
milliseconds; a single owner mutates the state (the simulator serializes
calls), so no internal locking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .crypto import FieldElement, h_id
from .merkle import MerkleCommitment, MerkleProof, MerkleTree, vec_commit, vec_open


class ChainError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


@dataclass(frozen=True)
class ProtocolParams:
    epoch_length: int = 200_000       # ms
    freeze: int = 20_000              # ms before the boundary, changes rejected
    withdraw_delay: int = 40_000      # ms after the boundary before claims
    record_expiry: int = 8_000        # ms a record stays admissible
    commitment_window: int = 2        # d: accepted recent epoch commitments
    round_length: int = 2_000         # ms

    def __post_init__(self):
        if not self.freeze < self.epoch_length:
            raise ValueError("freeze window must be shorter than an epoch")
        if not self.withdraw_delay < self.epoch_length:
            raise ValueError("withdrawal delay must be shorter than an epoch")
        if self.commitment_window < 1:
            raise ValueError("commitment window must be >= 1")


@dataclass(frozen=True)
class BoundaryEvent:
    epoch_index: int
    time: int
    commitment: MerkleCommitment


@dataclass
class ContractState:
    params: ProtocolParams
    deposits: dict[bytes, int] = field(default_factory=dict)   # stake_id -> {0,1}
    owner: dict[bytes, bytes] = field(default_factory=dict)    # stake_id -> account
    withdrawal_epoch: dict[bytes, int] = field(default_factory=dict)
    active_set: list[bytes] = field(default_factory=list)
    epoch_index: int = 0
    clock: int = 0
    pending_adds: set[bytes] = field(default_factory=set)
    pending_removes: set[bytes] = field(default_factory=set)
    commitment: MerkleCommitment | None = None
    _tree: MerkleTree | None = None
    _index_of: dict[bytes, int] = field(default_factory=dict)
    claimed_units: int = 0
    slashed_units: int = 0
    deposited_units: int = 0

    def __post_init__(self):
        if self.commitment is None:
            self._rebuild_commitment()

    # -- internals ----------------------------------------------------------

    def _epoch_end(self) -> int:
        return (self.epoch_index + 1) * self.params.epoch_length

    def _inside_freeze(self) -> bool:
        # The boundary instant of the freeze window itself rejects.
        return self.clock >= self._epoch_end() - self.params.freeze

    def _rebuild_commitment(self) -> None:
        # An empty active set commits to a single sentinel leaf so that the
        # commitment always exists.
        leaves = self.active_set if self.active_set else [bytes(32)]
        self.commitment, self._tree = vec_commit(leaves)
        self._index_of = {sid: i for i, sid in enumerate(self.active_set)}

    # -- contract calls -----------------------------------------------------

    def deposit_and_stake(self, stake_id: bytes, funds: int, account: bytes) -> None:
        if funds != 1:
            raise ChainError("wrong-amount", "stake deposits are exactly one unit")
        if self.owner.get(stake_id) is not None:
            raise ChainError("already-owned")
        if self._inside_freeze():
            raise ChainError("inside-freeze-window")
        self.deposits[stake_id] = 1
        self.owner[stake_id] = account
        self.withdrawal_epoch.pop(stake_id, None)
        self.pending_adds.add(stake_id)
        self.pending_removes.discard(stake_id)
        self.deposited_units += 1

    def unstake(self, stake_id: bytes, account: bytes) -> None:
        if self.owner.get(stake_id) != account:
            raise ChainError("not-owner")
        if not self.deposits.get(stake_id):
            raise ChainError("no-deposit")
        if self._inside_freeze():
            raise ChainError("inside-freeze-window")
        self.deposits[stake_id] = 0
        self.withdrawal_epoch[stake_id] = self.epoch_index
        if stake_id in self.pending_adds:
            self.pending_adds.discard(stake_id)
        else:
            self.pending_removes.add(stake_id)

    def claim_funds(self, stake_id: bytes, account: bytes) -> int:
        if self.owner.get(stake_id) != account:
            raise ChainError("not-owner")
        if stake_id not in self.withdrawal_epoch:
            raise ChainError("too-early", "no withdrawal requested")
        w = self.withdrawal_epoch[stake_id]
        if self.epoch_index <= w:
            raise ChainError("too-early", "withdrawal epoch not yet passed")
        release = (w + 1) * self.params.epoch_length + self.params.withdraw_delay
        if self.clock < release:
            raise ChainError("too-early", "withdrawal delay not yet elapsed")
        del self.withdrawal_epoch[stake_id]
        del self.owner[stake_id]
        self.deposits.pop(stake_id, None)
        self.claimed_units += 1
        return 1

    def slash(self, stake_sk: FieldElement, stake_id: bytes) -> None:
        if h_id(stake_sk) != stake_id:
            raise ChainError("bad-preimage")
        in_delay = stake_id in self.withdrawal_epoch
        if not (self.deposits.get(stake_id) == 1 or in_delay):
            raise ChainError("nothing-to-slash")
        self.deposits[stake_id] = 0
        self.owner.pop(stake_id, None)
        self.withdrawal_epoch.pop(stake_id, None)
        if stake_id in self.pending_adds:
            self.pending_adds.discard(stake_id)
        elif stake_id in self._index_of:
            self.pending_removes.add(stake_id)
        self.slashed_units += 1

    def get_commitment(self) -> MerkleCommitment:
        return self.commitment

    def get_proof(self, stake_id: bytes) -> tuple[MerkleProof, int]:
        idx = self._index_of.get(stake_id)
        if idx is None:
            raise ChainError("not-active")
        return vec_open(self._tree, idx), idx

    def is_active(self, stake_id: bytes) -> bool:
        return stake_id in self._index_of

    def advance_clock(self, dt: int) -> list[BoundaryEvent]:
        """Advance simulated time, applying pending set changes at every
        crossed epoch boundary. Emits one event per boundary."""
        if dt < 0:
            raise ValueError("time must not run backwards")
        target = self.clock + dt
        events = []
        while self._epoch_end() <= target:
            boundary = self._epoch_end()
            self.clock = boundary
            for sid in sorted(self.pending_removes):
                if sid in self._index_of:
                    self.active_set.remove(sid)
            for sid in sorted(self.pending_adds):
                self.active_set.append(sid)
            self.pending_adds.clear()
            self.pending_removes.clear()
            self.epoch_index += 1
            self._rebuild_commitment()
            events.append(BoundaryEvent(epoch_index=self.epoch_index,
                                        time=boundary, commitment=self.commitment))
        self.clock = target
        return events

    # -- accounting / debugging ---------------------------------------------

    def units_held(self) -> int:
        """Units currently deposited or awaiting withdrawal."""
        active = sum(self.deposits.values())
        waiting = len(self.withdrawal_epoch)
        return active + waiting

    def snapshot(self) -> str:
        lines = [
            f"epoch {self.epoch_index}",
            f"clock {self.clock}",
            f"active {len(self.active_set)}",
            f"pending_adds {len(self.pending_adds)}",
            f"pending_removes {len(self.pending_removes)}",
            f"root {self.commitment.root.hex()}",
        ]
        return "\n".join(lines)
