"""Closed-form and Monte Carlo analysis: mean-field recurrences for table
quality and record visibility, exact and Chernoff detection-error
probabilities, parameter helpers, and the omniscient-cut attack Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


class NoPositiveFixedPoint(Exception):
    """The recurrence admits only the collapsed equilibrium at zero."""


@dataclass(frozen=True)
class AnalysisParams:
    n: int
    s: float
    alpha: float = 0.0
    gamma: float = 0.90
    theta: float = 0.75
    delta: float = 0.25
    overlay_degree: float = 50.0
    kappa: float = 0.0  # informational: which asymptotic regime the set is in

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ValueError("adversary fraction must lie in [0, 1)")
        if not self.phi < self.theta < self.gamma:
            raise ValueError(
                f"need phi < theta < gamma, got {self.phi:.4g} / "
                f"{self.theta:.4g} / {self.gamma:.4g}")

    @property
    def phi(self) -> float:
        """Critical partition fraction: the largest view fraction the smaller
        side of an honest partition can see."""
        return (1 + self.alpha) / 2

    @property
    def eps_sec(self) -> float:
        return (1 - self.alpha) / 6

    @property
    def slice_prob(self) -> float:
        return self.s / math.sqrt(self.n)

    @property
    def table_size(self) -> float:
        return self.s * math.sqrt(self.n)


@dataclass(frozen=True)
class MeanFieldResult:
    q_thresh: float
    q_high: float
    v_high: float
    r0: float
    trajectory: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0 <= self.q_thresh <= self.q_high <= 1:
            raise ValueError("fixed points must satisfy 0 <= q_thresh <= q_high <= 1")
        if self.r0 <= 1 and self.v_high != 0:
            raise ValueError("no visibility equilibrium below the spread threshold")


def default_parameters(alpha: float) -> tuple[float, float, float]:
    """(phi, theta_default, eps) with theta splitting [phi, 1] into three
    equal slices: theta = phi + 2*eps = (5 + alpha)/6."""
    if not 0 <= alpha < 1:
        raise ValueError("adversary fraction must lie in [0, 1)")
    phi = (1 + alpha) / 2
    eps = (1 - alpha) / 6
    theta = (5 + alpha) / 6
    return phi, theta, eps


def r0(s: float, alpha: float) -> float:
    """Basic reproduction number of record spread."""
    if alpha >= 1:
        raise ValueError("adversary fraction must be < 1")
    return s * s * (1 - alpha)


def r0_threshold_s(alpha: float) -> float:
    """Smallest scaling constant at which records spread."""
    if alpha >= 1:
        raise ValueError("adversary fraction must be < 1")
    return 1 / math.sqrt(1 - alpha)


# ---------------------------------------------------------------------------
# Mean-field recurrences (silent adversary holding an alpha stake fraction)


def mf_quality_step(q: float, n: int, s: float, alpha: float) -> float:
    """One round of the table-quality recurrence:
    q' = 1 - (1 - (s/sqrt(n)) q)^(s*sqrt(n)*q*(1-alpha) + 1)."""
    if not 0 <= q <= 1:
        raise ValueError("quality must lie in [0, 1]")
    p = s / math.sqrt(n)
    base = 1 - p * q
    expo = s * math.sqrt(n) * q * (1 - alpha) + 1
    return 1 - base ** expo


def mf_quality_fixed_points(n: int, s: float, alpha: float,
                            tol: float = 1e-12,
                            max_iter: int = 1_000_000) -> tuple[float, float]:
    """(q_thresh, q_high): the unstable threshold and the stable high
    equilibrium. The high point is found by iterating from q=1; the
    threshold by bisecting the sign change of the step displacement."""
    if r0(s, alpha) <= 1:
        raise NoPositiveFixedPoint(f"R0 = {r0(s, alpha):.4g} <= 1")
    q = 1.0
    for _ in range(max_iter):
        nxt = mf_quality_step(q, n, s, alpha)
        if abs(nxt - q) < tol:
            q = nxt
            break
        q = nxt
    q_high = q
    if q_high < 1e-9:
        raise NoPositiveFixedPoint("iteration from q=1 collapsed to zero")

    def g(x: float) -> float:
        return mf_quality_step(x, n, s, alpha) - x

    lo = 1 / (s * math.sqrt(n))
    hi = q_high - 1e-9
    if g(lo) >= 0:
        # The map is expansive arbitrarily close to zero; no interior
        # threshold below the bracket floor is resolvable.
        return lo, q_high
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi), q_high


def mf_visibility_step(v: float, n: int, s: float, alpha: float) -> float:
    """One round of the record-visibility recurrence:
    v' = (s/sqrt(n)) * (1 - (1 - v)^(s*sqrt(n)*(1-alpha)))."""
    if not 0 <= v <= 1:
        raise ValueError("visibility must lie in [0, 1]")
    p = s / math.sqrt(n)
    expo = s * math.sqrt(n) * (1 - alpha)
    return p * (1 - (1 - v) ** expo)


def mf_visibility_fixed_point(n: int, s: float, alpha: float,
                              tol: float = 1e-12,
                              max_iter: int = 1_000_000) -> float:
    """Stable visibility equilibrium, iterated from v = s/sqrt(n).

    The printed recurrence has no injection term, so v = 0 is always a fixed
    point; growth out of zero is validated empirically in the simulator."""
    v = s / math.sqrt(n)
    for _ in range(max_iter):
        nxt = mf_visibility_step(v, n, s, alpha)
        if abs(nxt - v) < tol:
            return nxt
        v = nxt
    return v


def mf_visibility_iterate(v0: float, n: int, s: float, alpha: float,
                          steps: int) -> list[float]:
    out = [v0]
    v = v0
    for _ in range(steps):
        v = mf_visibility_step(v, n, s, alpha)
        out.append(v)
    return out


def mean_field_summary(n: int, s: float, alpha: float,
                       trajectory_from: float | None = None,
                       steps: int = 200) -> MeanFieldResult:
    """Bundle the equilibria for one parameter set. Below the spread
    threshold (R0 <= 1) only the collapsed state exists and all equilibria
    report as zero."""
    rep = r0(s, alpha)
    try:
        q_thresh, q_high = mf_quality_fixed_points(n, s, alpha)
    except NoPositiveFixedPoint:
        q_thresh = q_high = 0.0
    v_high = mf_visibility_fixed_point(n, s, alpha) if rep > 1 else 0.0
    traj = None
    if trajectory_from is not None:
        traj = tuple(mf_visibility_iterate(trajectory_from, n, s, alpha, steps))
    return MeanFieldResult(q_thresh=q_thresh, q_high=q_high, v_high=v_high,
                           r0=rep, trajectory=traj)


# ---------------------------------------------------------------------------
# Detection error probabilities


def _log_binom_pmf(k: np.ndarray, n: int, p: float) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    return (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
            + k * math.log(p) + (n - k) * math.log1p(-p))


def _logsumexp(a: np.ndarray) -> float:
    m = float(np.max(a))
    return m + math.log(float(np.sum(np.exp(a - m))))


def binom_cdf(k: int, n: int, p: float) -> float:
    """P[Binomial(n, p) <= k], exact, summed in log space."""
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    ks = np.arange(0, k + 1)
    return math.exp(_logsumexp(_log_binom_pmf(ks, n, p)))


def binom_sf(k: int, n: int, p: float) -> float:
    """P[Binomial(n, p) > k], exact, summed in log space over the upper tail
    (terms below machine relevance are dropped)."""
    if k < 0:
        return 1.0
    if k >= n:
        return 0.0
    lo = k + 1
    mean = n * p
    if lo <= mean:
        return 1.0 - binom_cdf(k, n, p)
    sd = math.sqrt(max(n * p * (1 - p), 1.0))
    hi = min(n, int(mean + 60 * sd) + lo)
    ks = np.arange(lo, hi + 1)
    logs = _log_binom_pmf(ks, n, p)
    keep = logs > logs.max() - 80
    return math.exp(_logsumexp(logs[keep]))


def detection_error_probs(params: AnalysisParams) -> tuple[float, float, float, float]:
    """(fp_exact, fn_exact, fp_chernoff, fn_chernoff).

    False positive: a node in a healthy network (gamma-fraction reachable)
    collects at most floor(theta*s*sqrt(n)) unique records and flags.
    False negative: a node on the small side of a partition (phi-fraction
    view) collects more than the threshold and stays silent.
    """
    p = params.slice_prob
    cut = math.floor(params.theta * params.table_size)
    fp_exact = binom_cdf(cut, math.floor(params.gamma * params.n), p)
    fn_exact = binom_sf(cut, math.floor(params.phi * params.n), p)
    ssn = params.table_size
    fp_ch = math.exp(-ssn * (params.gamma - params.theta) ** 2 / (2 * params.gamma))
    fn_ch = math.exp(-ssn * (params.theta - params.phi) ** 2
                     / (params.theta + params.phi))
    return fp_exact, fn_exact, fp_ch, fn_ch


def balanced_theta(alpha: float, gamma: float, tol: float = 1e-9) -> float:
    """Threshold equalizing the two Chernoff exponents
    (gamma-theta)^2/(2 gamma) and (theta-phi)^2/(theta+phi), by bisection."""
    phi = (1 + alpha) / 2
    if not phi < gamma:
        raise ValueError("need phi < gamma")

    def h(t: float) -> float:
        return (gamma - t) ** 2 / (2 * gamma) - (t - phi) ** 2 / (t + phi)

    lo, hi = phi, gamma
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Omniscient-cut attack Monte Carlo
#
# Event algebra of the overlay-resistance proof: for each node in the cut
# side A, X_A ~ Bin(|A| + alpha*n, s/sqrt(n)) counts slice entries from A and
# the adversary, X_B counts entries from B. The adversary withholds B-records
# wholesale; a node with X_A below the flag threshold can only be kept silent
# by feeding it theta*s*sqrt(n) - X_A of its true B-entries, each of which
# becomes a cross-cut overlay edge with probability p_c.


def log_binom(n: int, k: int) -> float:
    """ln C(n, k), for plot parity with the cut-count reference curve."""
    if k < 0 or k > n:
        return float("-inf")
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


@dataclass(frozen=True)
class CutTrial:
    noflag_count: int
    disconnected: bool
    success: bool
    log_success_prob: float  # exact P[no cross edge] for this trial's draws


def _cut_outcome(x_a: np.ndarray, x_b: np.ndarray, k: int, theta: float,
                 ssn: float, delta: float) -> tuple[int, int]:
    """(noflag_count, kept_B_entries) under the optimal suppression strategy
    for one trial's slice draws: withhold every cross-cut record, then buy
    silence for the cheapest nodes until a (1-delta)-fraction stays quiet."""
    thr = theta * ssn
    free = x_a >= thr                       # silent with zero B-entries
    need = np.ceil(thr - x_a).astype(int)   # B-entries required to stay silent
    can_buy = (~free) & (x_b >= need)
    target = math.ceil((1 - delta) * k)
    silent = int(free.sum())
    kept = 0
    if silent < target:
        costs = np.sort(need[can_buy])
        extra = min(target - silent, costs.size)
        kept = int(costs[:extra].sum())
        silent += extra
    return silent, kept


def cut_attack_trial(n: int, s: float, alpha: float, k: int, theta: float,
                     overlay_degree: float, rng: np.random.Generator,
                     delta: float = 0.25) -> CutTrial:
    """One Monte Carlo trial of the cut attack against side A of size k.

    Per node in A, X_A counts slice entries from A plus the adversary and
    X_B entries from across the cut; a node is either flagged or holds the
    B-entries the adversary was forced to reveal, each of which becomes a
    cross edge with probability overlay_degree / (s*sqrt(n)).
    """
    if not 1 <= k <= math.floor((1 - alpha) * n / 2):
        raise ValueError("cut size must satisfy 1 <= k <= (1-alpha)n/2")
    p = s / math.sqrt(n)
    ssn = s * math.sqrt(n)
    pc = overlay_degree / ssn
    x_a = rng.binomial(math.floor(k + alpha * n), p, size=k)
    x_b = rng.binomial(math.floor((1 - alpha) * n) - k, p, size=k)
    noflag, kept = _cut_outcome(x_a, x_b, k, theta, ssn, delta)
    target = math.ceil((1 - delta) * k)
    if pc >= 1:
        log_no_edge = float("-inf") if kept > 0 else 0.0
    else:
        log_no_edge = kept * math.log1p(-pc)
    edges = rng.binomial(kept, pc) if kept else 0
    disconnected = edges == 0
    return CutTrial(noflag_count=noflag, disconnected=disconnected,
                    success=noflag >= target and disconnected,
                    log_success_prob=log_no_edge if noflag >= target
                    else float("-inf"))


def cut_attack_success(n: int, s: float, alpha: float, k: int, theta: float,
                       overlay_degrees: list[float], trials: int, seed: int,
                       delta: float = 0.25) -> dict[float, tuple[float, float]]:
    """Per-degree (sampled_rate, mean_exact_prob) over matched draws.

    The slice draws are sampled once and shared by every degree; only the
    edge sampling uses a per-degree substream. The mean exact probability is
    then pointwise (1-p_c)^kept per trial, which makes it provably
    nonincreasing in the overlay degree.
    """
    if not 1 <= k <= math.floor((1 - alpha) * n / 2):
        raise ValueError("cut size must satisfy 1 <= k <= (1-alpha)n/2")
    p = s / math.sqrt(n)
    ssn = s * math.sqrt(n)
    target = math.ceil((1 - delta) * k)
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    outcomes = []
    for _ in range(trials):
        x_a = rng.binomial(math.floor(k + alpha * n), p, size=k)
        x_b = rng.binomial(math.floor((1 - alpha) * n) - k, p, size=k)
        outcomes.append(_cut_outcome(x_a, x_b, k, theta, ssn, delta))
    out = {}
    for di, deg in enumerate(overlay_degrees):
        pc = deg / ssn
        edge_rng = np.random.Generator(np.random.Philox(key=[seed, di + 1]))
        hits = 0
        acc = 0.0
        for noflag, kept in outcomes:
            if noflag < target:
                continue
            if pc >= 1:
                exact = 0.0 if kept else 1.0
            else:
                exact = math.exp(kept * math.log1p(-pc))
            acc += exact
            edges = edge_rng.binomial(kept, pc) if kept else 0
            hits += edges == 0
        out[deg] = (hits / trials, acc / trials)
    return out
