"""Branch disambiguation by repeating the protocol at randomised times.

When omega t3 (or kappa tau2) may lie outside (0, pi), the inversion only
determines cos(zeta t), which has a finite set of solutions zeta in the
search interval. Repeating the protocol at times that are (numerically)
incommensurate with the first separates the candidates: only the true
parameter reproduces the probabilities of every round.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .design import ParameterBox, ProtocolTimes, design_times
from .errors import InversionDomainError, NoSurvivorError, ValidationError
from .forward import forward_ideal_array, virtual_observables
from .measurement import empirical_frequencies, measure_all, substream

COS_TOL = 1e-9
SIN_FLOOR = 1e-2
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class CandidateSet:
    values: tuple
    source_time: float
    cos_value: float
    interval: tuple = (0.0, math.inf)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class AdaptiveConfig:
    epsilon0: float = 5e-3
    max_rounds: int = 3
    seed: int = 0
    search_interval: tuple | None = None

    def __post_init__(self):
        if not self.epsilon0 >= 0:
            raise ValidationError("epsilon0 must be >= 0")
        if self.max_rounds < 1:
            raise ValidationError("max_rounds must be >= 1")
        if self.search_interval is not None:
            lo, hi = self.search_interval
            if not 0 <= lo < hi:
                raise ValidationError("search_interval must satisfy 0 <= lo < hi")


def enumerate_candidates(cos_value: float, t: float, interval) -> CandidateSet:
    """All zeta in ``interval`` with cos(zeta t) = cos_value, sorted ascending."""
    lo, hi = (float(x) for x in interval)
    if not t > 0:
        raise ValidationError("t must be > 0")
    if not lo <= hi:
        raise ValidationError("empty interval")
    if abs(cos_value) > 1.0 + COS_TOL:
        raise InversionDomainError(f"|cos value| = {abs(cos_value)} > 1")
    a = math.acos(min(1.0, max(-1.0, cos_value)))
    period = 2.0 * math.pi
    k_lo = math.floor((lo * t - a) / period) - 1
    k_hi = math.ceil((hi * t + a) / period) + 1
    found = []
    for k in range(k_lo, k_hi + 1):
        for phase in (a, -a):
            z = (phase + period * k) / t
            if lo <= z <= hi:
                found.append(z)
    found.sort()
    dedup_tol = 1e-12 * max(hi - lo, 1e-300)
    values = []
    for z in found:
        if not values or z - values[-1] > dedup_tol:
            values.append(z)
    return CandidateSet(tuple(values), float(t), float(cos_value), (lo, hi))


def default_match_tolerance(epsilon0: float, t: float, cos_value: float) -> float:
    """epsilon0 on the cosine converted to a frequency tolerance at time t."""
    slope = t * max(math.sqrt(max(0.0, 1.0 - cos_value * cos_value)), SIN_FLOOR)
    return epsilon0 / slope


def cross_filter(set_a: CandidateSet, set_b: CandidateSet, tol: float | None = None) -> list:
    """Candidates of ``set_a`` that lie within ``tol`` of some candidate of ``set_b``."""
    if math.isclose(set_a.source_time, set_b.source_time, rel_tol=1e-12):
        warnings.warn("cross_filter called with identical times; no disambiguation possible",
                      stacklevel=2)
    if tol is None:
        tol = default_match_tolerance(1e-3, set_b.source_time, set_b.cos_value)
    if not set_b.values:
        return []
    other = np.asarray(set_b.values)
    return [z for z in set_a.values if np.min(np.abs(other - z)) <= tol]


@dataclass
class RoundDiagnostics:
    index: int
    times: ProtocolTimes
    p_hat: np.ndarray
    candidates_in: int
    survivors: int
    mismatch: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "round": self.index,
            "times": self.times.as_dict(),
            "p_hat": [float(x) for x in self.p_hat],
            "candidates_in": self.candidates_in,
            "survivors": self.survivors,
            "mismatch": [float(x) for x in self.mismatch],
        }


@dataclass
class AdaptiveResult:
    survivors: list
    rounds: list

    @property
    def ambiguous(self) -> bool:
        return len(self.survivors) > 1


def _base_candidates(p_hat: np.ndarray, times: ProtocolTimes, kappa_interval, omega_interval):
    p1, p2 = p_hat[0], p_hat[1]
    gamma1 = -math.log(p1) / times.t1
    kappas = enumerate_candidates(2.0 * p2 - 1.0, times.tau2, kappa_interval).values
    q3, q4 = virtual_observables(p_hat, times)
    D = 2.0 * q3 * q3 - q4
    if not D > 0:
        raise InversionDomainError("2 q3^2 - q4 <= 0 in the base round")
    gamma2 = -math.log(D / p1 ** (times.t3 / times.t1)) / (4.0 * times.t3)
    omegas = enumerate_candidates(q3 / math.sqrt(D), times.t3, omega_interval).values
    return [np.array([gamma1, kappa, gamma2, omega]) for kappa in kappas for omega in omegas]


def _mismatch(theta, times, p_hat) -> float:
    return float(np.max(np.abs(forward_ideal_array(theta, times) - p_hat)))


def adaptive_identify(source, box: ParameterBox, config: AdaptiveConfig, n: int,
                      times: ProtocolTimes | None = None) -> AdaptiveResult:
    """Identify all parameter vectors consistent with every round within epsilon0.

    Round 0 runs the base protocol ``times`` (designed from ``box`` when
    omitted) and enumerates every (kappa, omega) branch: kappa over the box
    range, omega over ``config.search_interval``. Each further round draws
    tau2 and t3 uniformly from [0.5, 1.5] times their base values and drops
    the candidates whose ideal probabilities miss that round's frequencies by
    more than epsilon0 in sup-norm.
    """
    base = times if times is not None else design_times(box)
    kappa_interval = (box.lower.kappa, box.upper.kappa)
    omega_interval = config.search_interval or (box.lower.omega, box.upper.omega)
    rng = substream(config.seed, 0xADA)

    rounds = []
    history = []
    survivors = None
    for r in range(config.max_rounds):
        if r == 0:
            t = base
        else:
            f2, f3 = rng.uniform(0.5, 1.5, size=2)
            t = ProtocolTimes(base.t1, base.tau2 * f2, base.t3 * f3, base.beta, base.k)
        p_hat = empirical_frequencies(measure_all(source, t, n)).p_hat
        history.append((t, p_hat))
        if survivors is None:
            survivors = _base_candidates(p_hat, t, kappa_interval, omega_interval)
        before = len(survivors)
        mism = [max(_mismatch(th, tt, pp) for tt, pp in history) for th in survivors]
        kept = [th for th, m in zip(survivors, mism) if m <= config.epsilon0]
        rounds.append(RoundDiagnostics(r, t, p_hat, before, len(kept), mism))
        survivors = kept
        if len(survivors) <= 1:
            break

    if not survivors:
        raise NoSurvivorError(
            f"no candidate reproduces all rounds within epsilon0 = {config.epsilon0}", rounds)
    return AdaptiveResult(survivors, rounds)


def golden_time(t: float) -> float:
    """A second time with an irrational-looking ratio to ``t``."""
    return t * GOLDEN
