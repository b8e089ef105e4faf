"""Bayesian retraining trigger over an observed performance-degradation signal.

The posterior that retraining is needed given a degradation s is

    P(retrain | s) = L1 * prior / (L1 * prior + L0 * (1 - prior))

where L1 and L0 are the likelihoods of s under the "retrain needed" and
"healthy" models. The default likelihoods are two Gaussians; explicit
likelihood values can be supplied directly, which keeps the formula
testable independently of the density choice. Retraining triggers when
the posterior exceeds the configured threshold (default 0.7).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import DegenerateEvidenceError, MonitorError


@dataclass(frozen=True)
class DegradationSignal:
    """Observed degradation: reference metric minus current metric.

    Positive means performance got worse.
    """

    s_t: float
    observed_at: datetime | None = None

    def __post_init__(self):
        if not math.isfinite(self.s_t):
            raise MonitorError("degradation signal must be finite")


@dataclass(frozen=True)
class PolicyConfig:
    """Prior, Gaussian likelihood models, and the trigger threshold."""

    prior_retrain: float = 0.5
    mu1: float = 0.05
    sigma1: float = 0.02
    mu0: float = 0.0
    sigma0: float = 0.02
    posterior_threshold: float = 0.7
    sequential: bool = False

    def __post_init__(self):
        if not 0.0 <= self.prior_retrain <= 1.0:
            raise MonitorError("prior_retrain must be in [0, 1]")
        if not 0.0 <= self.posterior_threshold <= 1.0:
            raise MonitorError("posterior_threshold must be in [0, 1]")
        if self.sigma1 <= 0 or self.sigma0 <= 0:
            raise MonitorError("likelihood sigmas must be strictly positive")

    def to_dict(self) -> dict:
        return {
            "prior_retrain": self.prior_retrain,
            "mu1": self.mu1,
            "sigma1": self.sigma1,
            "mu0": self.mu0,
            "sigma0": self.sigma0,
            "posterior_threshold": self.posterior_threshold,
            "sequential": self.sequential,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class RetrainDecision:
    posterior: float
    trigger: bool
    rationale: str


def posterior_from_likelihoods(likelihood_retrain: float, likelihood_healthy: float, prior: float) -> float:
    """Posterior from explicit likelihood values.

    Raises:
        DegenerateEvidenceError: both likelihoods are zero.
    """
    if likelihood_retrain < 0 or likelihood_healthy < 0:
        raise MonitorError("likelihoods must be nonnegative")
    if not 0.0 <= prior <= 1.0:
        raise MonitorError("prior must be in [0, 1]")
    if likelihood_retrain == 0.0 and likelihood_healthy == 0.0:
        raise DegenerateEvidenceError("both likelihoods are zero; posterior undefined")
    numerator = likelihood_retrain * prior
    denominator = numerator + likelihood_healthy * (1.0 - prior)
    if denominator == 0.0:
        # one likelihood is zero and the prior puts no mass on the other side
        return prior
    return numerator / denominator


def _log_gaussian(x: float, mu: float, sigma: float) -> float:
    z = (x - mu) / sigma
    return -0.5 * z * z - math.log(sigma * math.sqrt(2.0 * math.pi))


def posterior_retrain(signal: DegradationSignal, config: PolicyConfig) -> float:
    """Posterior retraining probability under the Gaussian likelihood models.

    Computed from log-densities: Gaussian tails underflow to zero for strong
    degradations, which would otherwise turn a decisive signal into a
    degenerate 0/0.
    """
    if config.prior_retrain == 0.0:
        return 0.0
    if config.prior_retrain == 1.0:
        return 1.0
    log_l1 = _log_gaussian(signal.s_t, config.mu1, config.sigma1)
    log_l0 = _log_gaussian(signal.s_t, config.mu0, config.sigma0)
    log_odds = (
        log_l1
        - log_l0
        + math.log(config.prior_retrain)
        - math.log(1.0 - config.prior_retrain)
    )
    if log_odds > 700.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(-log_odds))


def decide(signal: DegradationSignal, config: PolicyConfig) -> RetrainDecision:
    """Evaluate the trigger rule: retrain iff posterior > threshold.

    In sequential mode the caller feeds decision.posterior back as the next
    prior (single writer per monitored model stream).
    """
    posterior = posterior_retrain(signal, config)
    trigger = posterior > config.posterior_threshold
    comparator = ">" if trigger else "<="
    rationale = (
        f"posterior {posterior:.6f} {comparator} threshold "
        f"{config.posterior_threshold:g} for degradation {signal.s_t:+.6f}"
    )
    return RetrainDecision(posterior=posterior, trigger=trigger, rationale=rationale)


def now_utc() -> datetime:
    return datetime.now(timezone.utc)
