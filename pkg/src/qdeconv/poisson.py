"""Poisson observation model for blurred images.

An observation is y = Poisson(c * H x) / c for a photon-count scale c.
The (shifted) negative log-likelihood dropping the x-independent term is

    f(x) = -sum(y * log(H x + eps)) + sum(H x)

whose gradient is H^T (1 - y / (H x + eps)). The small shift eps keeps
the logarithm finite when blurred intensities vanish.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blur import BlurOperator
from .errors import DomainError, SnrUnreachable
from .metrics import snr_db

__all__ = [
    "NoiseSpec",
    "PoissonProblem",
    "DegradeResult",
    "sample_observation",
    "degrade",
    "neg_log_likelihood",
    "gradient",
    "gradient_norm_bound",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Target signal-to-noise ratio (dB) and the RNG seed that fixes it."""

    target_snr_db: float
    seed: int


@dataclass(frozen=True)
class PoissonProblem:
    """Blur operator, vectorized observation and log-shift eps."""

    blur: BlurOperator
    observed: np.ndarray
    epsilon: float = 1e-6

    def __post_init__(self):
        y = np.asarray(self.observed, dtype=np.float64).copy()
        if y.ndim != 1 or y.size != self.blur.n_pixels:
            raise DomainError(
                f"observation of length {y.size} does not match operator grid"
            )
        if not np.all(np.isfinite(y)) or np.any(y < 0.0):
            raise DomainError("observation must be finite and non-negative")
        if not (0.0 < self.epsilon <= 1e-3):
            raise DomainError(f"epsilon must lie in (0, 1e-3], got {self.epsilon}")
        y.setflags(write=False)
        object.__setattr__(self, "observed", y)


@dataclass(frozen=True)
class DegradeResult:
    observed: np.ndarray
    achieved_snr_db: float
    scale: float


def sample_observation(blurred: np.ndarray, scale: float, seed) -> np.ndarray:
    """Draw y = Poisson(scale * blurred) / scale with a dedicated generator."""
    rng = np.random.default_rng(seed)
    return rng.poisson(scale * blurred).astype(np.float64) / scale


def degrade(
    x: np.ndarray,
    blur: BlurOperator,
    spec: NoiseSpec,
    *,
    tolerance_db: float = 0.25,
    scale_lo: float = 1.0,
    scale_hi: float = 1e8,
    max_probes: int = 60,
) -> DegradeResult:
    """Blur x and add Poisson noise hitting the requested SNR.

    The photon-count scale is bisected (geometrically) until the measured
    SNR of the sampled observation lands within `tolerance_db` of the
    target; each probe uses a sub-seed derived from (spec.seed, probe),
    so the result is a pure function of its arguments.

    Raises SnrUnreachable when no scale inside [scale_lo, scale_hi]
    attains the target.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError("clean image must lie in [0, 1]")
    b = blur.apply(x)
    if float(np.linalg.norm(b)) == 0.0:
        raise SnrUnreachable("blurred image is identically zero")

    def probe(scale: float, idx: int) -> tuple[np.ndarray, float]:
        seed = np.random.SeedSequence((spec.seed, idx))
        y = sample_observation(b, scale, seed)
        return y, snr_db(b, y - b)

    # accept inside a tighter internal band so the contract has headroom
    band = 0.6 * tolerance_db
    target = spec.target_snr_db
    y_lo, s_lo = probe(scale_lo, 0)
    if abs(s_lo - target) <= band:
        return DegradeResult(y_lo, s_lo, scale_lo)
    y_hi, s_hi = probe(scale_hi, 1)
    if abs(s_hi - target) <= band:
        return DegradeResult(y_hi, s_hi, scale_hi)
    if not (s_lo < target < s_hi):
        raise SnrUnreachable(
            f"target {target:.2f} dB outside reachable range "
            f"[{s_lo:.2f}, {s_hi:.2f}] dB"
        )
    lo, hi = scale_lo, scale_hi
    for idx in range(2, max_probes):
        mid = float(np.sqrt(lo * hi))
        y, s = probe(mid, idx)
        if abs(s - target) <= band:
            return DegradeResult(y, s, mid)
        if s < target:
            lo = mid
        else:
            hi = mid
    raise SnrUnreachable(
        f"bisection did not settle within {tolerance_db} dB of {target} dB"
    )


def _check_domain(x: np.ndarray, prob: PoissonProblem) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != prob.blur.n_pixels:
        raise DomainError(f"point of length {x.size} does not match operator grid")
    if np.any(x < 0.0):
        raise DomainError("negative intensities are outside the model domain")
    return x


def neg_log_likelihood(x: np.ndarray, prob: PoissonProblem) -> float:
    """Shifted Poisson negative log-likelihood up to an x-free constant."""
    x = _check_domain(x, prob)
    hx = prob.blur.apply(x)
    return float(hx.sum() - prob.observed @ np.log(hx + prob.epsilon))


def gradient(x: np.ndarray, prob: PoissonProblem) -> np.ndarray:
    """Gradient of :func:`neg_log_likelihood` at x."""
    x = _check_domain(x, prob)
    hx = prob.blur.apply(x)
    return prob.blur.apply_adjoint(1.0 - prob.observed / (hx + prob.epsilon))


def gradient_norm_bound(prob: PoissonProblem) -> float:
    """A priori bound on ||gradient(x)||_2, valid for every feasible x.

    Uses ||H^T||_2 <= sum |kernel| (exact for a non-negative circulant
    kernel) so the bound is norm(y) * ||H^T|| / eps + ||H^T 1||.
    """
    op_norm = float(np.abs(prob.blur.psf.weights).sum())
    ht_one = prob.blur.apply_adjoint(np.ones(prob.blur.n_pixels))
    return (
        op_norm * float(np.linalg.norm(prob.observed)) / prob.epsilon
        + float(np.linalg.norm(ht_one))
    )
