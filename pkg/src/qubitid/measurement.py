"""Shot-noise simulation and measurement sources.

Counts are drawn from the exact binomial law (numpy's generator uses
inversion for small ``n * min(p, 1 - p)`` and BTPE rejection above that).
Every (trial, observable) pair gets its own Philox substream derived from
the user seed, so results do not depend on call order.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .design import ProtocolTimes
from .errors import ValidationError

N_OBSERVABLES = 4


@dataclass(frozen=True)
class ShotCounts:
    s: np.ndarray
    n: int

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.int64)
        if s.shape != (N_OBSERVABLES,):
            raise ValidationError(f"expected {N_OBSERVABLES} counts, got shape {s.shape}")
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if np.any(s < 0) or np.any(s > self.n):
            raise ValidationError(f"counts {s.tolist()} outside [0, {self.n}]")
        object.__setattr__(self, "s", s)


@dataclass(frozen=True)
class EmpiricalFrequencies:
    p_hat: np.ndarray
    n: int


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox generator for the given (seed, key...) path."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def sample_counts(p, n: int, seed: int, trial: int = 0, stream: int = 0) -> ShotCounts:
    """Binomial excited-state counts for each of the four observables.

    Observable ``j`` of trial ``trial`` draws from substream ``(seed, stream, trial, j)``.
    """
    p = np.asarray(p, dtype=float)
    if n < 1:
        raise ValidationError("n must be >= 1")
    if np.any(p < 0) or np.any(p > 1):
        raise ValidationError(f"probabilities outside [0, 1]: {p}")
    s = np.array([substream(seed, stream, trial, j).binomial(int(n), p[j])
                  for j in range(N_OBSERVABLES)])
    return ShotCounts(s, int(n))


def sample_frequencies_batch(p, n: int, seed: int, trials: int, stream: int = 0) -> np.ndarray:
    """Clamped empirical frequencies for ``trials`` repetitions; shape (trials, 4).

    Row ``i`` equals ``empirical_frequencies(sample_counts(p, n, seed, i, stream)).p_hat``.
    """
    out = np.empty((trials, N_OBSERVABLES))
    for i in range(trials):
        out[i] = empirical_frequencies(sample_counts(p, n, seed, i, stream)).p_hat
    return out


def clamp_frequencies(p_hat, n: int) -> np.ndarray:
    floor = 1.0 / (2.0 * n)
    return np.clip(np.asarray(p_hat, dtype=float), floor, 1.0 - floor)


def empirical_frequencies(counts: ShotCounts) -> EmpiricalFrequencies:
    """s / n clamped to [1/(2n), 1 - 1/(2n)]."""
    return EmpiricalFrequencies(clamp_frequencies(counts.s / counts.n, counts.n), counts.n)


class MeasurementSource(Protocol):
    def measure(self, times: ProtocolTimes, n: int, observable: int) -> tuple[int, int]:
        """Return (excited count, shots) for one observable (0-based index)."""
        ...


def measure_all(source: MeasurementSource, times: ProtocolTimes, n: int) -> ShotCounts:
    rows = [source.measure(times, n, j) for j in range(N_OBSERVABLES)]
    shots = {r[1] for r in rows}
    if len(shots) != 1:
        raise ValidationError(f"observables report different shot counts: {sorted(shots)}")
    return ShotCounts(np.array([r[0] for r in rows]), rows[0][1])


class SimulatedSource:
    """Draws counts from a forward model evaluated at the true parameters.

    ``model(times)`` returns the four exact probabilities. Each call to
    ``measure`` for a new ``times`` advances a round counter so repeated
    protocols use fresh substreams.
    """

    def __init__(self, model, seed: int):
        self.model = model
        self.seed = int(seed)
        self._rounds: dict[ProtocolTimes, int] = {}
        self._probs: dict[ProtocolTimes, np.ndarray] = {}

    def measure(self, times, n, observable):
        if times not in self._rounds:
            self._rounds[times] = len(self._rounds)
            self._probs[times] = np.asarray(self.model(times), dtype=float)
        rnd = self._rounds[times]
        p = self._probs[times][observable]
        return int(substream(self.seed, 0, rnd, observable).binomial(int(n), p)), int(n)


class FileSource:
    """Counts read from a CSV table with rows ``observable_index, s, n``.

    Indices are 1-based as in the file (1..4). Lines starting with ``#`` are
    comments; a header row is optional.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.rows: dict[int, tuple[int, int]] = {}
        with self.path.open(newline="") as fh:
            for row in csv.reader(line for line in fh if not line.lstrip().startswith("#")):
                if not row or not "".join(row).strip():
                    continue
                try:
                    idx, s, n = (int(float(x)) for x in row[:3])
                except ValueError:
                    if not self.rows:
                        continue  # header
                    raise ValidationError(f"{self.path}: malformed row {row}") from None
                if idx not in range(1, N_OBSERVABLES + 1):
                    raise ValidationError(f"{self.path}: observable index {idx} not in 1..4")
                if not 0 <= s <= n or n < 1:
                    raise ValidationError(f"{self.path}: invalid counts s={s}, n={n}")
                self.rows[idx] = (s, n)
        missing = [j for j in range(1, N_OBSERVABLES + 1) if j not in self.rows]
        if missing:
            raise ValidationError(f"{self.path}: missing observables {missing}")

    def measure(self, times, n, observable):
        return self.rows[observable + 1]


def write_counts(path, counts: ShotCounts) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["observable_index", "s", "n"])
        for j, s in enumerate(counts.s, start=1):
            w.writerow([j, int(s), counts.n])
