"""Sparse-projection denoiser on the adaptive eigenbasis.

A noisy image is projected onto the retained eigenvectors, either by
greedy orthogonal matching pursuit or by plain inner products, the
coefficients are attenuated by an energy-rank threshold, and the image
is rebuilt from what survives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .basis import QabBasis
from .errors import DimensionError, DomainError, NumericalFailure

__all__ = [
    "ThresholdSpec",
    "SparseCoeffs",
    "omp_project",
    "full_project",
    "apply_threshold",
    "reconstruct",
    "denoise",
    "QabDenoiser",
]


@dataclass(frozen=True)
class ThresholdSpec:
    """Energy-rank attenuation profile.

    Coefficients of the keep_all lowest-energy vectors pass unchanged;
    beyond that the factor falls off linearly, reaching zero after
    rolloff additional ranks.
    """

    keep_all: int
    rolloff: float

    def __post_init__(self):
        if int(self.keep_all) != self.keep_all or self.keep_all < 1:
            raise DomainError(f"keep_all must be a positive integer, got {self.keep_all}")
        if not (self.rolloff > 0.0 and np.isfinite(self.rolloff)):
            raise DomainError(f"rolloff must be positive, got {self.rolloff}")

    def factor(self, rank: int) -> float:
        """Attenuation for a 1-based energy rank."""
        if rank <= self.keep_all:
            return 1.0
        return max(0.0, 1.0 - (rank - self.keep_all) / self.rolloff)


@dataclass(frozen=True)
class SparseCoeffs:
    """Coefficients on a sorted subset of basis indices."""

    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=np.int64)
        v = np.asarray(self.values, dtype=np.float64)
        if s.ndim != 1 or v.ndim != 1 or s.size != v.size:
            raise DimensionError("support and values disagree in shape")
        if s.size and (np.any(np.diff(s) <= 0) or s[0] < 0):
            raise DomainError("support must be sorted, unique and non-negative")
        s.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "values", v)


def _check_signal(v: np.ndarray, basis: QabBasis) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != basis.n_sites:
        raise DimensionError(
            f"signal of length {v.size} does not match basis on {basis.n_sites} sites"
        )
    return v


def omp_project(v: np.ndarray, basis: QabBasis, *, track_residuals: bool = False):
    """Greedy matching pursuit of v over all basis vectors.

    Runs one iteration per atom: pick the atom most correlated with the
    current residual (lowest index on ties), extend the support, re-solve
    the least-squares fit on the support through an incrementally updated
    Cholesky factor of the Gram matrix, and update the residual. With
    track_residuals, also returns the residual norm after every
    iteration.
    """
    v = _check_signal(v, basis)
    b = basis.vectors
    t = basis.size
    corr0 = b.T @ v
    gram = basis.gram
    chol = np.zeros((t, t))
    gram_sel = np.empty((t, t))
    rhs = np.empty(t)
    selected: list[int] = []
    coef = np.empty(0)
    v_sq = float(v @ v)
    res_norms = np.empty(t)
    for step in range(t):
        if step == 0:
            corr = corr0
        else:
            corr = corr0 - gram_sel[:, :step] @ coef
        score = np.abs(corr)
        if selected:
            score[selected] = -1.0  # atoms already chosen stay out
        j = int(np.argmax(score))
        # grow the Cholesky factor of the support Gram matrix
        gcol = gram[:, j]
        if step == 0:
            pivot_sq = float(gcol[j])
        else:
            w = solve_triangular(
                chol[:step, :step], gram_sel[j, :step], lower=True, check_finite=False
            )
            pivot_sq = float(gcol[j]) - float(w @ w)
            chol[step, :step] = w
        if pivot_sq <= 1e-12:
            raise NumericalFailure("selected atoms are numerically dependent")
        chol[step, step] = np.sqrt(pivot_sq)
        gram_sel[:, step] = gcol
        rhs[step] = corr0[j]
        selected.append(j)
        m = step + 1
        half = solve_triangular(
            chol[:m, :m], rhs[:m], lower=True, check_finite=False
        )
        coef = solve_triangular(
            chol[:m, :m].T, half, lower=False, check_finite=False
        )
        if track_residuals:
            # ||v - Phi a||^2 expanded via the Gram matrix
            gss = gram_sel[np.array(selected), :m]
            quad = float(coef @ (gss @ coef))
            res_norms[step] = float(np.sqrt(max(0.0, v_sq - 2.0 * coef @ rhs[:m] + quad)))
    order = np.argsort(selected)
    sel_arr = np.asarray(selected, dtype=np.int64)
    coeffs = SparseCoeffs(support=sel_arr[order], values=coef[order])
    if track_residuals:
        return coeffs, res_norms
    return coeffs


def full_project(v: np.ndarray, basis: QabBasis) -> SparseCoeffs:
    """Plain inner-product projection onto every basis vector."""
    v = _check_signal(v, basis)
    return SparseCoeffs(
        support=np.arange(basis.size, dtype=np.int64), values=basis.vectors.T @ v
    )


def apply_threshold(coeffs: SparseCoeffs, spec: ThresholdSpec) -> SparseCoeffs:
    """Attenuate coefficients by energy rank; drop the ones that reach zero.

    The rank is the 1-based position of the vector in the full basis
    ordering (ascending energy), independent of the order in which a
    pursuit happened to select it.
    """
    ranks = coeffs.support + 1
    factors = np.where(
        ranks <= spec.keep_all,
        1.0,
        np.maximum(0.0, 1.0 - (ranks - spec.keep_all) / spec.rolloff),
    )
    keep = factors > 0.0
    return SparseCoeffs(
        support=coeffs.support[keep], values=coeffs.values[keep] * factors[keep]
    )


def reconstruct(coeffs: SparseCoeffs, basis: QabBasis) -> np.ndarray:
    """Weighted sum of the supported basis vectors."""
    if coeffs.support.size == 0:
        return np.zeros(basis.n_sites)
    if coeffs.support[-1] >= basis.size:
        raise DimensionError("support index exceeds basis size")
    return basis.vectors[:, coeffs.support] @ coeffs.values


def denoise(
    v: np.ndarray,
    basis: QabBasis,
    spec: ThresholdSpec,
    *,
    use_omp: bool = True,
    clip_output: bool = True,
) -> np.ndarray:
    """Project, attenuate by energy rank, rebuild, clamp to [0, 1]."""
    coeffs = omp_project(v, basis) if use_omp else full_project(v, basis)
    out = reconstruct(apply_threshold(coeffs, spec), basis)
    if clip_output:
        np.clip(out, 0.0, 1.0, out=out)
    return out


@dataclass(frozen=True)
class QabDenoiser:
    """Denoiser closure used inside the plug-and-play iteration."""

    basis: QabBasis
    spec: ThresholdSpec
    use_omp: bool = True

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return denoise(v, self.basis, self.spec, use_omp=self.use_omp)
