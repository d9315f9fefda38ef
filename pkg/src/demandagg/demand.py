"""Per-zone monthly demand models and Monte Carlo simulation."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, TextIO, Union

import numpy as np

from .data import MonthlySeries

OVERDISPERSION_THRESHOLD = 1.1


@dataclass(frozen=True)
class Median:
    level: float

    @property
    def mean(self) -> float:
        return self.level


@dataclass(frozen=True)
class Poisson:
    lam: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("Poisson rate must be >= 0")

    @property
    def mean(self) -> float:
        return self.lam

    @property
    def variance(self) -> float:
        return self.lam


@dataclass(frozen=True)
class GammaPoisson:
    """Negative binomial: Poisson counts whose rate ~ Gamma(r, scale=(1-p)/p)."""

    r: float
    p: float

    def __post_init__(self):
        if not (self.r > 0 and 0 < self.p < 1):
            raise ValueError(f"invalid gamma-Poisson parameters r={self.r}, p={self.p}")

    @property
    def mean(self) -> float:
        return self.r * (1 - self.p) / self.p

    @property
    def variance(self) -> float:
        return self.r * (1 - self.p) / self.p**2


@dataclass(frozen=True)
class Degenerate:
    """Point mass at zero, for zones that never saw training demand."""

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def variance(self) -> float:
        return 0.0


ZoneModel = Union[Median, Poisson, GammaPoisson, Degenerate]


@dataclass(frozen=True)
class DemandModel:
    """One entry per zone, indexed by zone id."""

    entries: tuple[ZoneModel, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self):
        return len(self.entries)

    @property
    def is_stochastic(self) -> bool:
        return not any(isinstance(e, Median) for e in self.entries)

    @property
    def expected_total(self) -> float:
        return float(sum(e.mean for e in self.entries))

    def to_dict(self) -> dict:
        out = {}
        for zone, e in enumerate(self.entries):
            if isinstance(e, Median):
                out[str(zone)] = {"kind": "median", "level": e.level}
            elif isinstance(e, Poisson):
                out[str(zone)] = {"kind": "poisson", "lambda": e.lam}
            elif isinstance(e, GammaPoisson):
                out[str(zone)] = {"kind": "gamma_poisson", "r": e.r, "p": e.p}
            else:
                out[str(zone)] = {"kind": "degenerate"}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DemandModel":
        entries = []
        for zone in range(len(d)):
            e = d[str(zone)]
            kind = e["kind"]
            if kind == "median":
                entries.append(Median(float(e["level"])))
            elif kind == "poisson":
                entries.append(Poisson(float(e["lambda"])))
            elif kind == "gamma_poisson":
                entries.append(GammaPoisson(float(e["r"]), float(e["p"])))
            elif kind == "degenerate":
                entries.append(Degenerate())
            else:
                raise ValueError(f"unknown model kind {kind!r}")
        return cls(tuple(entries))


def fit_median(train_series: MonthlySeries) -> DemandModel:
    """Per-zone median monthly count (even lengths average the middle pair)."""
    if train_series.counts.shape[1] < 1:
        raise ValueError("need at least one month")
    med = np.median(train_series.counts, axis=1)
    return DemandModel(tuple(Median(float(m)) for m in med))


def fit_count_distribution(zone_counts: Sequence[int]) -> ZoneModel:
    """Poisson or gamma-Poisson fit for one zone's monthly counts.

    Poisson when the unbiased variance is at most 1.1 times the mean,
    otherwise a method-of-moments negative binomial.  An all-zero history
    gives :class:`Degenerate`.
    """
    x = np.asarray(zone_counts, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two months")
    if np.any(x < 0):
        raise ValueError("counts must be non-negative")
    if not x.any():
        return Degenerate()
    m = float(x.mean())
    s2 = float(x.var(ddof=1))
    if s2 <= OVERDISPERSION_THRESHOLD * m:
        return Poisson(m)
    return GammaPoisson(m * m / (s2 - m), m / s2)


def fit_stochastic(train_series: MonthlySeries) -> DemandModel:
    return DemandModel(tuple(fit_count_distribution(row) for row in train_series.counts))


def predict_static(model: DemandModel) -> np.ndarray:
    """Per-zone static levels of a median model."""
    if not all(isinstance(e, Median) for e in model.entries):
        raise ValueError("static predictions need a median (deterministic) model")
    return np.array([e.level for e in model.entries], dtype=float)


def _sampling_params(model: DemandModel):
    lam = np.zeros(len(model))
    gp_idx, gp_r, gp_scale = [], [], []
    for i, e in enumerate(model.entries):
        if isinstance(e, Median):
            raise ValueError(f"zone {i} has a deterministic median model and cannot be sampled")
        if isinstance(e, Poisson):
            lam[i] = e.lam
        elif isinstance(e, GammaPoisson):
            gp_idx.append(i)
            gp_r.append(e.r)
            gp_scale.append((1 - e.p) / e.p)
    return lam, np.array(gp_idx, dtype=np.int64), np.array(gp_r), np.array(gp_scale)


def _draw(params, rng: np.random.Generator, months: int) -> np.ndarray:
    lam, gp_idx, gp_r, gp_scale = params
    rates = np.broadcast_to(lam, (months, lam.size)).copy()
    if gp_idx.size:
        rates[:, gp_idx] = rng.gamma(gp_r, gp_scale, size=(months, gp_idx.size))
    return rng.poisson(rates)


def sample_month(model: DemandModel, rng: np.random.Generator) -> np.ndarray:
    """One independent draw per zone."""
    return _draw(_sampling_params(model), rng, 1)[0]


def replication_rng(master_seed: int, replication: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, replication]))


@dataclass
class SimulationResult:
    replications: int
    months_per_replication: int
    monthly_totals: np.ndarray  # (replications, months)
    master_seed: int

    def __post_init__(self):
        if self.monthly_totals.shape != (self.replications, self.months_per_replication):
            raise ValueError("monthly_totals shape mismatch")

    def write_csv(self, out: TextIO) -> None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("replication", "month", "total"))
        for r, row in enumerate(self.monthly_totals):
            for m, v in enumerate(row):
                w.writerow((r, m + 1, int(v)))


def simulate(model: DemandModel, months: int, replications: int, master_seed: int,
             n_jobs: int = 1) -> SimulationResult:
    """Monte Carlo monthly totals; replication ``r`` is seeded from (master_seed, r)."""
    if months < 1 or replications < 1:
        raise ValueError("months and replications must be >= 1")
    params = _sampling_params(model)

    def run(r):
        return _draw(params, replication_rng(master_seed, r), months).sum(axis=1)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            rows = list(ex.map(run, range(replications)))
    else:
        rows = [run(r) for r in range(replications)]
    totals = np.array(rows, dtype=np.int64).reshape(replications, months)
    return SimulationResult(replications, months, totals, master_seed)


def extreme_month_counts(sim: SimulationResult, lower: int, upper: int) -> tuple[int, int]:
    """Number of simulated months strictly below ``lower`` and strictly above ``upper``."""
    if not lower < upper:
        raise ValueError("lower must be < upper")
    t = sim.monthly_totals
    return int((t < lower).sum()), int((t > upper).sum())
