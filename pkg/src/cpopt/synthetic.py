"""GARCH returns with jumps at chosen break times.

The generator is

    x_t = L_t + y_t
    y_t = phi * y_{t-1} + e_t,        e_t = sigma_t * z_t
    sigma_t^2 = omega + alpha e_{t-1}^2 + beta sigma_{t-1}^2 + gamma e_{t-1}^2 [e_{t-1} < 0]

where z_t is Student-t scaled to unit variance and L_t is a level that
moves by J = (2B - 1) G at each break, B ~ Bernoulli(p), G ~ Gamma(shape,
scale). The level persists until the next jump, so each break time is a
change in mean. Innovations and jumps use separate random streams, so
removing breaks leaves the noise path unchanged.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .changepoint import BreakSet
from .errors import DataError
from .ingest import ReturnSeries
from .io import atomic_write_text, fmt, read_json, write_json


@dataclass(frozen=True)
class SimSpec:
    n: int = 1000
    break_times: tuple[int, ...] = ()
    ar_coeff: float = 0.0
    jump_prob_direction: float = 0.5
    jump_shape: float = 2.0
    jump_scale: float | None = None  # None: 5 * sqrt(omega)
    garch_omega: float = 1e-5
    garch_alpha: float = 0.05
    garch_beta: float = 0.85
    leverage_gamma: float = 0.1
    student_dof: float = 5.0
    seed: int = 0
    asset_id: str = "sim"

    def __post_init__(self):
        bt = tuple(int(t) for t in self.break_times)
        object.__setattr__(self, "break_times", bt)
        if self.n < 2:
            raise DataError("n must be at least 2")
        if any(not 1 <= t <= self.n - 1 for t in bt):
            raise DataError(f"break times must lie in [1, {self.n - 1}]")
        if any(b <= a for a, b in zip(bt, bt[1:])):
            raise DataError("break times must be strictly increasing")
        if not abs(self.ar_coeff) < 1:
            raise DataError("|ar_coeff| must be < 1")
        if not 0 <= self.jump_prob_direction <= 1:
            raise DataError("jump_prob_direction must lie in [0, 1]")
        if not self.jump_shape > 0 or (self.jump_scale is not None and not self.jump_scale >= 0):
            raise DataError("jump shape must be positive and scale non-negative")
        if not self.garch_omega > 0:
            raise DataError("garch_omega must be positive")
        if min(self.garch_alpha, self.garch_beta, self.leverage_gamma) < 0:
            raise DataError("GARCH coefficients must be non-negative")
        if not self.persistence < 1:
            raise DataError("alpha + beta + gamma/2 must be < 1")
        if not self.student_dof > 2:
            raise DataError("student_dof must exceed 2")

    @property
    def persistence(self) -> float:
        return self.garch_alpha + self.garch_beta + 0.5 * self.leverage_gamma

    @property
    def scale(self) -> float:
        return 5.0 * math.sqrt(self.garch_omega) if self.jump_scale is None else self.jump_scale

    @property
    def unconditional_variance(self) -> float:
        """Variance of y_t without jumps."""
        return self.garch_omega / (1.0 - self.persistence) / (1.0 - self.ar_coeff**2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["break_times"] = list(self.break_times)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise DataError(f"unknown SimSpec fields: {sorted(extra)}")
        d = dict(d)
        if "break_times" in d:
            d["break_times"] = tuple(d["break_times"])
        return cls(**d)

    def write_json(self, path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def read_json(cls, path) -> "SimSpec":
        return cls.from_dict(read_json(path))


@dataclass(frozen=True, eq=False)
class SimOutput:
    returns: ReturnSeries
    true_breaks: BreakSet
    sigma2: np.ndarray
    jumps: np.ndarray = field(repr=False, default=None)

    def to_csv(self) -> str:
        brk = set(self.true_breaks.indices)
        lines = ["t,return,sigma2,is_break"]
        for t, (x, s) in enumerate(zip(self.returns.values, self.sigma2)):
            lines.append(f"{t},{fmt(x)},{fmt(s)},{int(t in brk)}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv())


def _streams(seed: int):
    noise, jump = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(noise), np.random.default_rng(jump)


def simulate(spec: SimSpec) -> SimOutput:
    rng_z, rng_j = _streams(spec.seed)
    nu = spec.student_dof
    z = rng_z.standard_t(nu, spec.n) * math.sqrt((nu - 2.0) / nu)
    m = len(spec.break_times)
    up = rng_j.random(m) < spec.jump_prob_direction
    size = rng_j.gamma(spec.jump_shape, spec.scale, m) if spec.scale > 0 else np.zeros(m)
    jumps = np.where(up, 1.0, -1.0) * size
    step = np.zeros(spec.n)
    if m:
        step[np.asarray(spec.break_times)] = jumps
    level = np.cumsum(step)
    s2_0 = spec.garch_omega / (1.0 - spec.persistence)
    x, s2 = kernels.garch_path(z, level, spec.ar_coeff, spec.garch_omega, spec.garch_alpha,
                               spec.garch_beta, spec.leverage_gamma, s2_0)
    for a in (x, s2, jumps):
        a.setflags(write=False)
    returns = ReturnSeries.from_values(x, spec.asset_id)
    return SimOutput(returns, BreakSet(spec.asset_id, spec.break_times), s2, jumps)


def simulate_cluster(n_assets: int, shared_breaks: Sequence[int],
                     idiosyncratic_breaks: Sequence[Sequence[int]] | None = None,
                     base_spec: SimSpec | None = None, asset_ids: Sequence[str] | None = None) -> list[SimOutput]:
    """Assets whose break sets are the shared set plus their own extras.

    Asset i gets seed [base seed, i] so innovation paths are independent.
    """
    base = base_spec or SimSpec()
    idio = idiosyncratic_breaks or [()] * n_assets
    if len(idio) != n_assets:
        raise DataError("one idiosyncratic break list per asset required")
    ids = list(asset_ids) if asset_ids is not None else [f"asset{i + 1}" for i in range(n_assets)]
    out = []
    for i in range(n_assets):
        breaks = tuple(sorted(set(shared_breaks) | set(idio[i])))
        seed = int(np.random.SeedSequence([base.seed, i]).generate_state(1)[0])
        out.append(simulate(replace(base, break_times=breaks, seed=seed, asset_id=ids[i])))
    return out


# Eight-asset regime: two clusters of identical break sets (8 and 3 breaks)
# plus two single-break outliers at opposite ends of the sample.
REGIME_HORIZON = 2000
REGIME_BREAKS = {
    "asset1": tuple(range(200, 1700, 200)),
    "asset2": tuple(range(200, 1700, 200)),
    "asset3": tuple(range(200, 1700, 200)),
    "asset4": (300, 1000, 1700),
    "asset5": (300, 1000, 1700),
    "asset6": (300, 1000, 1700),
    "asset7": (1900,),
    "asset8": (100,),
}


def eight_asset_regime(base_spec: SimSpec | None = None) -> list[SimOutput]:
    base = base_spec or SimSpec(n=REGIME_HORIZON, jump_scale=None)
    if base.n <= max(max(v) for v in REGIME_BREAKS.values()):
        raise DataError("base spec too short for the regime's break times")
    out = []
    for i, (aid, breaks) in enumerate(REGIME_BREAKS.items()):
        seed = int(np.random.SeedSequence([base.seed, i]).generate_state(1)[0])
        out.append(simulate(replace(base, break_times=breaks, seed=seed, asset_id=aid)))
    return out
