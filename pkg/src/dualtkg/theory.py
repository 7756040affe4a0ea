"""Gaussian margin model: closed-form and Monte-Carlo pairwise error rates.

With ``gamma_D ~ N(mu_D, sigma_D^2)``, ``gamma_E ~ N(mu_E, sigma_E^2)`` and
correlation ``rho``, the fused margin ``gamma_D + gamma_E`` is Gaussian with
mean ``mu_D + mu_E`` and variance ``sigma_D^2 + sigma_E^2 + 2 rho sigma_D sigma_E``,
so every error rate ``P(gamma <= 0)`` is ``Phi(-mean / std)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class GaussianMarginSpec:
    mu_d: float
    mu_e: float
    sigma_d: float
    sigma_e: float
    rho: float

    def __post_init__(self):
        if self.sigma_d <= 0 or self.sigma_e <= 0:
            raise ValueError("standard deviations must be positive")
        if abs(self.rho) > 1:
            raise ValueError("correlation must lie in [-1, 1]")

    @classmethod
    def identical(cls, mu: float, sigma: float, rho: float) -> "GaussianMarginSpec":
        return cls(mu, mu, sigma, sigma, rho)

    @property
    def fused_mean(self) -> float:
        return self.mu_d + self.mu_e

    @property
    def fused_variance(self) -> float:
        v = self.sigma_d ** 2 + self.sigma_e ** 2 + 2 * self.rho * self.sigma_d * self.sigma_e
        return max(v, 0.0)


def _tail(mean: float, var: float) -> float:
    """``P(X <= 0)`` for ``X ~ N(mean, var)``; a point mass when ``var == 0``."""
    if var <= 0:
        return 0.0 if mean > 0 else (1.0 if mean < 0 else 0.5)
    return normal_cdf(-mean / math.sqrt(var))


@dataclass
class FusionErrorReport:
    p_d: float
    p_e: float
    p_fused: float
    snr_d: float
    snr_e: float
    snr_fused: float
    samples: int = 0
    se_d: float = 0.0
    se_e: float = 0.0
    se_fused: float = 0.0

    def to_dict(self):
        return asdict(self)


def _snr(mean, var):
    if var <= 0:
        return math.copysign(math.inf, mean) if mean else 0.0
    return mean / math.sqrt(var)


def closed_form_errors(spec: GaussianMarginSpec) -> FusionErrorReport:
    return FusionErrorReport(
        p_d=_tail(spec.mu_d, spec.sigma_d ** 2),
        p_e=_tail(spec.mu_e, spec.sigma_e ** 2),
        p_fused=_tail(spec.fused_mean, spec.fused_variance),
        snr_d=spec.mu_d / spec.sigma_d,
        snr_e=spec.mu_e / spec.sigma_e,
        snr_fused=_snr(spec.fused_mean, spec.fused_variance),
    )


def monte_carlo_errors(spec: GaussianMarginSpec, sample_count: int, seed: int = 0,
                       block_size: int = 1 << 18) -> FusionErrorReport:
    """Estimate the three error rates from correlated Gaussian samples.

    Pairs are built from two independent standard normals; blocks draw from
    child seeds of ``seed`` so results do not depend on the host.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    n_blocks = -(-sample_count // block_size)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    counts = np.zeros(3, dtype=np.int64)
    sums = np.zeros(3)
    squares = np.zeros(3)
    remaining = sample_count
    c = math.sqrt(max(1.0 - spec.rho ** 2, 0.0))
    for child in children:
        n = min(block_size, remaining)
        remaining -= n
        rng = np.random.default_rng(child)
        z1 = rng.standard_normal(n)
        z2 = rng.standard_normal(n)
        gd = spec.mu_d + spec.sigma_d * z1
        ge = spec.mu_e + spec.sigma_e * (spec.rho * z1 + c * z2)
        gf = gd + ge
        for i, g in enumerate((gd, ge, gf)):
            counts[i] += np.count_nonzero(g <= 0)
            sums[i] += g.sum()
            squares[i] += np.square(g).sum()
    p = counts / sample_count
    se = np.sqrt(p * (1 - p) / sample_count)
    mean = sums / sample_count
    var = np.maximum(squares / sample_count - mean ** 2, 0.0)
    snr = [_snr(m, v) for m, v in zip(mean, var)]
    return FusionErrorReport(p[0], p[1], p[2], snr[0], snr[1], snr[2], sample_count,
                             se[0], se[1], se[2])


DEFAULT_GRID = {
    "mu": (0.5, 1.0, 2.0),
    "sigma": (0.5, 1.0),
    "rho": (-0.5, 0.0, 0.5, 0.9),
}


def theorem_check(specs, samples: int = 0, seed: int = 0) -> list[dict]:
    """Check the fused-error reduction on each spec.

    For identical-marginal specs with positive mean and ``rho < 1`` the fused
    error must be strictly below the (equal) single-view errors; ``rho == 1``
    is reported as the equality boundary.  For general specs the row records
    whether the SNR condition holds and, when it does, that the fused error is
    below both single-view errors.
    """
    rows = []
    for spec in specs:
        cf = closed_form_errors(spec)
        row = {"spec": asdict(spec), "closed_form": cf.to_dict()}
        identical = spec.mu_d == spec.mu_e and spec.sigma_d == spec.sigma_e
        if identical:
            if spec.mu_d <= 0:
                row.update(status="skipped", note="requires a positive mean margin")
            elif spec.rho >= 1:
                equal = abs(cf.p_fused - cf.p_d) <= 1e-12
                row.update(status="boundary" if equal else "fail",
                           note="rho = 1: fused error equals single-view error")
            else:
                ok = cf.p_fused < cf.p_d and cf.p_d == cf.p_e
                row.update(status="pass" if ok else "fail")
        else:
            snr_condition = cf.snr_fused > max(cf.snr_d, cf.snr_e)
            reduces = cf.p_fused < min(cf.p_d, cf.p_e)
            row["snr_condition"] = snr_condition
            if snr_condition:
                row.update(status="pass" if reduces else "fail")
            else:
                row.update(status="skipped", note="SNR condition not met")
        if samples:
            mc = monte_carlo_errors(spec, samples, seed)
            row["monte_carlo"] = mc.to_dict()
            row["max_abs_dev"] = max(abs(mc.p_d - cf.p_d), abs(mc.p_e - cf.p_e),
                                     abs(mc.p_fused - cf.p_fused))
        rows.append(row)
    return rows


def grid_specs(mu=DEFAULT_GRID["mu"], sigma=DEFAULT_GRID["sigma"], rho=DEFAULT_GRID["rho"]):
    return [GaussianMarginSpec.identical(m, s, r) for m, s, r in itertools.product(mu, sigma, rho)]


def spec_from_summary(mean_d, mean_e, snr_d, snr_e, rho) -> GaussianMarginSpec:
    """Gaussian spec matching reported mean margins, SNRs and correlation."""
    return GaussianMarginSpec(mean_d, mean_e, mean_d / snr_d, mean_e / snr_e, rho)
