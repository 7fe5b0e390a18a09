"""Adaptive orthonormal basis from a discretized Schroedinger operator.

The observed image, smoothed and normalized, acts as a potential on the
pixel grid. The operator couples 4-neighbors with weight -planck and
carries x[i] plus planck times the number of in-grid neighbors on the
diagonal, so a flat potential yields the graph Laplacian (zero row sums).
Eigenvectors below an energy cutoff oscillate slowly where the potential
is high and quickly where it is low, which is what makes the basis adapt
to image content.

Eigenpairs come from a dense solver on small grids and from Lanczos with
full reorthogonalization (deterministic start vector, restart on
breakdown) on large ones.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import (
    DimensionError,
    DomainError,
    EigensolverFailure,
    EmptyBasis,
    InvalidPsf,
)
from .image import Image, normalize

__all__ = [
    "QabConfig",
    "Hamiltonian",
    "QabBasis",
    "presmooth",
    "assemble_hamiltonian",
    "eigendecompose",
    "build_basis",
    "save_basis",
    "load_basis",
    "potential_fingerprint",
]

# grids up to this many sites use the dense eigensolver by default
DENSE_SITE_LIMIT = 1024


@dataclass(frozen=True)
class QabConfig:
    """Knobs controlling basis construction.

    planck scales the kinetic (neighbor-coupling) term, sigma_smooth is
    the width of the pre-smoothing Gaussian, and eigenpairs with energy
    below energy_cutoff are retained up to max_vectors of them.
    """

    planck: float = 4.0
    sigma_smooth: float = 7.0
    energy_cutoff: float = 4.1
    max_vectors: int = 1024

    def __post_init__(self):
        if not (self.planck > 0.0 and np.isfinite(self.planck)):
            raise DomainError(f"planck must be positive, got {self.planck}")
        if not (self.sigma_smooth > 0.0 and np.isfinite(self.sigma_smooth)):
            raise DomainError(f"sigma_smooth must be positive, got {self.sigma_smooth}")
        if not np.isfinite(self.energy_cutoff):
            raise DomainError("energy_cutoff must be finite")
        if self.max_vectors < 1:
            raise DomainError(f"max_vectors must be >= 1, got {self.max_vectors}")


def _gaussian_taps(sigma: float) -> np.ndarray:
    if not (sigma > 0.0) or not np.isfinite(sigma):
        raise InvalidPsf(f"smoothing sigma must be positive, got {sigma}")
    radius = int(np.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(k**2) / (2.0 * sigma * sigma))
    return w / w.sum()


def presmooth(img: Image, sigma: float) -> Image:
    """Separable circular Gaussian smoothing, kernel radius ceil(3 sigma)."""
    taps = _gaussian_taps(sigma)
    radius = (taps.size - 1) // 2
    out = img.pixels.copy()
    for axis in (0, 1):
        acc = np.zeros_like(out)
        for shift, w in zip(range(-radius, radius + 1), taps):
            acc += w * np.roll(out, shift, axis=axis)
        out = acc
    return Image(out)


@dataclass(frozen=True)
class Hamiltonian:
    """Sparse symmetric operator on the pixel grid (height * width sites)."""

    height: int
    width: int
    planck: float
    matrix: sp.csr_matrix

    @property
    def n_sites(self) -> int:
        return self.height * self.width


def assemble_hamiltonian(potential: Image, planck: float) -> Hamiltonian:
    """Build the grid operator for a potential with intensities in [0, 1].

    Off-diagonal entries are -planck between horizontal neighbors within
    a row and vertical neighbors within a column; there is no wraparound.
    The diagonal holds potential[i] plus planck times the in-grid
    neighbor count (4 interior, 3 edge, 2 corner).
    """
    if not (planck > 0.0 and np.isfinite(planck)):
        raise DomainError(f"planck must be positive, got {planck}")
    px = potential.pixels
    if px.min() < 0.0 or px.max() > 1.0:
        raise DomainError("potential must be normalized to [0, 1]")
    h, w = px.shape
    n = h * w
    deg = np.zeros((h, w), dtype=np.float64)
    if h > 1:
        deg[1:, :] += 1.0
        deg[:-1, :] += 1.0
    if w > 1:
        deg[:, 1:] += 1.0
        deg[:, :-1] += 1.0
    diag = px.reshape(-1) + planck * deg.reshape(-1)
    data = [diag]
    offsets = [0]
    if w > 1:
        horiz = np.full(n - 1, -planck)
        horiz[w - 1 :: w] = 0.0  # no coupling across row ends
        data += [horiz, horiz]
        offsets += [1, -1]
    if h > 1:
        vert = np.full(n - w, -planck)
        data += [vert, vert]
        offsets += [w, -w]
    mat = sp.diags(data, offsets, shape=(n, n), format="csr")
    return Hamiltonian(height=h, width=w, planck=float(planck), matrix=mat)


@dataclass(frozen=True)
class QabBasis:
    """Retained eigenpairs, energies ascending, vectors as columns."""

    energies: np.ndarray
    vectors: np.ndarray
    gram: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=np.float64)
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or e.ndim != 1 or v.shape[1] != e.size:
            raise DimensionError("energies and vectors disagree in shape")
        g = self.gram if self.gram is not None else v.T @ v
        for arr in (e, v, g):
            arr.setflags(write=False)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "gram", g)

    @property
    def size(self) -> int:
        return self.energies.size

    @property
    def n_sites(self) -> int:
        return self.vectors.shape[0]


def _validated_basis(ham: Hamiltonian, energies: np.ndarray, vectors: np.ndarray) -> QabBasis:
    # every build gets checked: sorted energies, orthonormal columns,
    # small eigen-residuals
    if np.any(np.diff(energies) < -1e-12):
        raise EigensolverFailure("eigenvalues not sorted ascending")
    gram = vectors.T @ vectors
    ortho = gram - np.eye(gram.shape[0])
    if np.abs(np.diag(ortho)).max(initial=0.0) > 1e-10:
        raise EigensolverFailure("eigenvectors are not unit norm")
    np.fill_diagonal(ortho, 0.0)
    if np.abs(ortho).max(initial=0.0) > 1e-8:
        raise EigensolverFailure("eigenvectors are not orthogonal")
    resid = ham.matrix @ vectors - vectors * energies
    res_norms = np.linalg.norm(resid, axis=0)
    if np.any(res_norms > 1e-8 * np.maximum(1.0, np.abs(energies))):
        raise EigensolverFailure(
            f"eigen-residual too large: max {res_norms.max():.3e}"
        )
    return QabBasis(energies=energies, vectors=vectors, gram=gram)


def _start_vector(n: int) -> np.ndarray:
    # all-ones plus a fixed ripple so no symmetry sector is missed
    v = 1.0 + 0.01 * np.sin(0.7 * np.arange(n) + 0.3)
    return v / np.linalg.norm(v)


def _fresh_direction(n: int, attempt: int, basis: np.ndarray) -> np.ndarray | None:
    idx = np.arange(n, dtype=np.float64)
    for k in range(attempt, attempt + 8):
        v = np.sin((0.13 + 0.37 * k) * idx + 0.11 * k) + 0.5 * np.cos(0.05 * k * idx)
        for _ in range(2):
            v = v - basis @ (basis.T @ v)
        nv = np.linalg.norm(v)
        if nv > 1e-6:
            return v / nv
    return None


def _seed_block(n: int, width: int) -> np.ndarray:
    """Deterministic orthonormal starting block, at most width columns."""
    cols = [_start_vector(n)]
    attempt = 1000  # keep clear of the restart candidates
    while len(cols) < min(width, n):
        fresh = _fresh_direction(n, attempt, np.column_stack(cols))
        attempt += 8
        if fresh is None:
            break
        cols.append(fresh)
    return np.column_stack(cols)


def _candidate_count(theta: np.ndarray, cutoff: float, cap: int) -> int | None:
    """How many leading Ritz pairs must be converged; None = keep iterating.

    Includes one pair at or above the cutoff whenever the below-cutoff
    count (rather than the cap) determines the basis size, so that count
    is certified by a converged witness.
    """
    below = int(np.count_nonzero(theta < cutoff))
    m = theta.size
    if below == 0:
        return 1
    if below >= cap:
        return min(m, cap + 1)
    if below == m:
        return None
    return below + 1


# column-block width for the Lanczos sweep; blocks turn the
# reorthogonalization into matrix-matrix products
LANCZOS_BLOCK = 8
# Chebyshev degree used to damp the unwanted upper spectrum per sweep
FILTER_DEGREE = 16


def _gershgorin(mat: sp.csr_matrix) -> tuple[float, float]:
    """Inclusive bounds on the spectrum from Gershgorin discs."""
    d = np.asarray(mat.diagonal(), dtype=np.float64)
    row_abs = np.asarray(np.abs(mat).sum(axis=1)).ravel()
    off = row_abs - np.abs(d)
    return float((d - off).min()), float((d + off).max())


def _cheb_block(
    mat: sp.csr_matrix,
    blk: np.ndarray,
    hblk: np.ndarray,
    deg: int,
    a: float,
    b: float,
    a0: float,
) -> np.ndarray:
    """Scaled Chebyshev filter boosting the spectrum below `a`.

    Maps [a, b] into [-1, 1] and normalizes the growth so values near a0
    stay at unit scale (three-term recurrence with running sigma
    factors). deg <= 1 degenerates to a plain operator application.
    """
    if deg <= 1:
        return hblk.copy()
    e = 0.5 * (b - a)
    c = 0.5 * (b + a)
    sigma1 = e / (a0 - c)
    sigma = sigma1
    x = blk
    y = (hblk - c * blk) * (sigma1 / e)
    for _ in range(2, deg + 1):
        sigma_new = 1.0 / (2.0 / sigma1 - sigma)
        y_new = (mat @ y - c * y) * (2.0 * sigma_new / e) - (sigma * sigma_new) * x
        x, y = y, y_new
        sigma = sigma_new
    return y


def _lanczos_lowest(
    mat: sp.csr_matrix,
    cutoff: float,
    cap: int,
    *,
    tol: float = 1e-9,
    max_dim: int | None = None,
    block_size: int = LANCZOS_BLOCK,
) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs below `cutoff` (at most `cap`) of a sparse symmetric matrix.

    Blocked Lanczos with full reorthogonalization (two Gram-Schmidt passes
    per block) from a deterministic seed block. New directions are drawn
    through a Chebyshev filter that damps the spectrum well above the
    cutoff, which keeps the subspace close to the wanted size even when
    eigenvalues cluster near the cutoff; the filter band widens whenever
    convergence stalls. The projection uses the operator itself (exact
    Rayleigh-Ritz), candidates are certified with explicit residual
    norms, and the certificate includes one eigenvalue at or above the
    cutoff so the below-cutoff count is trustworthy. Rank-deficient block
    columns are survived by injecting fresh deterministic directions.
    """
    n = mat.shape[0]
    max_dim = n if max_dim is None else min(max_dim, n)
    b = max(1, min(block_size, max_dim))
    lo_bound, hi_bound = _gershgorin(mat)
    spread = hi_bound - cutoff
    band_frac = 0.08
    deg = FILTER_DEGREE if spread > 1e-9 * max(1.0, abs(hi_bound)) else 1
    alloc = min(max_dim, 256)
    v_store = np.zeros((n, alloc))
    hv_store = np.zeros((n, alloc))
    t_mat = np.zeros((alloc, alloc))
    seed = _seed_block(n, b)
    avail = seed.shape[1]  # orthonormal columns built so far
    v_store[:, :avail] = seed
    done = 0  # columns already multiplied through the operator
    restarts = 0
    next_check = min(max_dim, 4 * b)
    prev_sig = None
    stall = 0
    while True:
        if avail + b > alloc:
            alloc = min(max(max_dim, avail + b), max(alloc * 2, avail + b))
            grown = np.zeros((n, alloc))
            grown[:, : v_store.shape[1]] = v_store
            v_store = grown
            hgrown = np.zeros((n, alloc))
            hgrown[:, : hv_store.shape[1]] = hv_store
            hv_store = hgrown
            t_grown = np.zeros((alloc, alloc))
            t_grown[: t_mat.shape[0], : t_mat.shape[1]] = t_mat
            t_mat = t_grown
        s, e = done, avail
        width = e - s
        blk = v_store[:, s:e]
        hblk = mat @ blk
        hv_store[:, s:e] = hblk
        cols = v_store[:, :e].T @ hblk  # exact projected columns V^T H v_j
        t_mat[:e, s:e] = cols
        t_mat[s:e, :e] = cols.T
        done = e
        exhausted = done >= max_dim
        if not exhausted:
            w = _cheb_block(
                mat, blk, hblk, deg, cutoff + band_frac * spread, hi_bound, lo_bound
            )
            pre_norms = np.linalg.norm(w, axis=0)
            prev = v_store[:, :e]
            w -= prev @ (prev.T @ w)
            w -= prev @ (prev.T @ w)
            take = min(width, max_dim - done)
            t = 0
            for cidx in range(width):
                if t == take:
                    break
                wcol = w[:, cidx].copy()
                for _ in range(2):
                    if t:
                        coef = v_store[:, e : e + t].T @ wcol
                        wcol -= v_store[:, e : e + t] @ coef
                nrm = float(np.linalg.norm(wcol))
                if nrm > max(1e-10 * pre_norms[cidx], 1e-13):
                    v_store[:, e + t] = wcol / nrm
                    t += 1
                    continue
                # filtered direction already spanned: continue from a
                # fresh deterministic one
                restarts += 1
                fresh = _fresh_direction(n, restarts, v_store[:, : e + t])
                if fresh is None:
                    continue  # nothing orthogonal left along this column
                v_store[:, e + t] = fresh
                t += 1
            if t == 0:
                exhausted = True  # residual block vanished: space is spanned
            else:
                avail = e + t
        if done >= next_check or exhausted:
            m = done
            theta = np.linalg.eigvalsh(t_mat[:m, :m])
            below = int(np.count_nonzero(theta < cutoff))
            k_check = _candidate_count(theta, cutoff, cap)
            if k_check is None and exhausted and m == n:
                # the whole space is below the cutoff
                k_check = m
            attempt = k_check is not None and (
                exhausted or prev_sig is None or below == prev_sig[0]
            )
            if attempt:
                theta_f, s_full = np.linalg.eigh(t_mat[:m, :m])
                x = v_store[:, :m] @ s_full[:, :k_check]
                hx = hv_store[:, :m] @ s_full[:, :k_check]
                res_norms = np.linalg.norm(hx - x * theta_f[:k_check], axis=0)
                ok = res_norms <= tol * np.maximum(1.0, np.abs(theta_f[:k_check]))
                if ok.all():
                    below_f = int(np.count_nonzero(theta_f[:k_check] < cutoff))
                    if below_f == 0:
                        raise EmptyBasis(f"no eigenvalue below cutoff {cutoff}")
                    keep = min(cap, below_f)
                    return theta_f[:keep].copy(), x[:, :keep]
                sig = (below, int(ok.sum()))
                stall = stall + 1 if sig == prev_sig else 0
                prev_sig = sig
                if stall >= 2 and band_frac < 0.7:
                    # candidates near the cutoff sit outside the boosted
                    # band; widen it and keep going
                    band_frac = min(0.72, band_frac * 3.0)
                    stall = 0
            elif k_check is not None:
                prev_sig = (below, -1)
            if exhausted:
                break
            next_check = min(max_dim, done + 2 * b)
    raise EigensolverFailure(
        f"Lanczos did not certify the basis within Krylov dimension {max_dim}"
    )


def eigendecompose(
    ham: Hamiltonian,
    energy_cutoff: float,
    max_vectors: int = 1024,
    *,
    method: str = "auto",
    tol: float = 1e-9,
    max_dim: int | None = None,
) -> QabBasis:
    """Retain the lowest eigenpairs with energy strictly below the cutoff.

    At most max_vectors pairs are kept. method is "auto" (dense up to
    1024 sites, Lanczos beyond), "dense", or "lanczos". Raises EmptyBasis
    when nothing falls below the cutoff and EigensolverFailure when the
    iterative solver cannot certify the result.
    """
    if max_vectors < 1:
        raise DomainError(f"max_vectors must be >= 1, got {max_vectors}")
    if not np.isfinite(energy_cutoff):
        raise DomainError("energy_cutoff must be finite")
    n = ham.n_sites
    if method == "auto":
        method = "dense" if n <= DENSE_SITE_LIMIT else "lanczos"
    if method == "dense":
        vals, vecs = np.linalg.eigh(ham.matrix.toarray())
        below = int(np.count_nonzero(vals < energy_cutoff))
        if below == 0:
            raise EmptyBasis(f"no eigenvalue below cutoff {energy_cutoff}")
        t = min(max_vectors, below)
        energies, vectors = vals[:t].copy(), vecs[:, :t].copy()
    elif method == "lanczos":
        energies, vectors = _lanczos_lowest(
            ham.matrix, energy_cutoff, max_vectors, tol=tol, max_dim=max_dim
        )
    else:
        raise DomainError(f"unknown eigensolver method {method!r}")
    return _validated_basis(ham, energies, vectors)


def potential_fingerprint(potential: Image, cfg: QabConfig) -> str:
    """Content hash identifying a basis build (potential plus parameters)."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(potential.pixels).tobytes())
    meta = (
        potential.height,
        potential.width,
        cfg.planck,
        cfg.energy_cutoff,
        cfg.max_vectors,
    )
    h.update(repr(meta).encode("ascii"))
    return h.hexdigest()


def save_basis(path, basis: QabBasis, fingerprint: str) -> None:
    np.savez(
        path,
        energies=basis.energies,
        vectors=basis.vectors,
        fingerprint=np.array(fingerprint),
    )


def load_basis(path, fingerprint: str) -> tuple[np.ndarray, np.ndarray] | None:
    """Return cached (energies, vectors) when the fingerprint matches."""
    p = Path(path)
    if not p.exists():
        return None
    with np.load(p) as data:
        if str(data["fingerprint"]) != fingerprint:
            return None
        return data["energies"].copy(), data["vectors"].copy()


def build_basis(
    observed: Image,
    cfg: QabConfig,
    *,
    method: str = "auto",
    cache_dir=None,
) -> QabBasis:
    """Potential from the observation, then the eigenbasis below the cutoff.

    The observation is normalized and pre-smoothed once; the basis is a
    pure function of that potential and the config. With cache_dir set,
    eigenpairs are reused across runs via a content fingerprint.
    """
    potential = presmooth(normalize(observed), cfg.sigma_smooth)
    # smoothing averages values in [0, 1]; clip away rounding excursions
    potential = Image(np.clip(potential.pixels, 0.0, 1.0))
    ham = assemble_hamiltonian(potential, cfg.planck)
    if cache_dir is not None:
        fp = potential_fingerprint(potential, cfg)
        cache_path = Path(cache_dir) / f"basis-{fp[:16]}.npz"
        cached = load_basis(cache_path, fp)
        if cached is not None:
            return _validated_basis(ham, *cached)
        basis = eigendecompose(ham, cfg.energy_cutoff, cfg.max_vectors, method=method)
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        save_basis(cache_path, basis, fp)
        return basis
    return eigendecompose(ham, cfg.energy_cutoff, cfg.max_vectors, method=method)
