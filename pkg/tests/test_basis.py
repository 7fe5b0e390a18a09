import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from qdeconv.basis import (
    DENSE_SITE_LIMIT,
    Hamiltonian,
    QabConfig,
    assemble_hamiltonian,
    build_basis,
    eigendecompose,
    load_basis,
    potential_fingerprint,
    presmooth,
    save_basis,
)
from qdeconv.errors import (
    DomainError,
    EigensolverFailure,
    EmptyBasis,
    InvalidPsf,
)
from qdeconv.image import Image


def random_potential(seed, h, w):
    rng = np.random.default_rng(seed)
    return Image(rng.random((h, w)))


# 3x3 grid, flat zero potential, planck = 1: neighbor-count diagonal with
# -1 couplings inside rows and columns, no wraparound anywhere
LAPLACIAN_3X3 = np.array(
    [
        [2, -1, 0, -1, 0, 0, 0, 0, 0],
        [-1, 3, -1, 0, -1, 0, 0, 0, 0],
        [0, -1, 2, 0, 0, -1, 0, 0, 0],
        [-1, 0, 0, 3, -1, 0, -1, 0, 0],
        [0, -1, 0, -1, 4, -1, 0, -1, 0],
        [0, 0, -1, 0, -1, 3, 0, 0, -1],
        [0, 0, 0, -1, 0, 0, 2, -1, 0],
        [0, 0, 0, 0, -1, 0, -1, 3, -1],
        [0, 0, 0, 0, 0, -1, 0, -1, 2],
    ],
    dtype=np.float64,
)


def test_qab_config_validation():
    with pytest.raises(DomainError):
        QabConfig(planck=0.0)
    with pytest.raises(DomainError):
        QabConfig(sigma_smooth=-1.0)
    with pytest.raises(DomainError):
        QabConfig(energy_cutoff=np.inf)
    with pytest.raises(DomainError):
        QabConfig(max_vectors=0)


def test_presmooth_preserves_constant():
    img = Image(np.full((9, 9), 0.42))
    out = presmooth(img, 2.0)
    assert np.allclose(out.pixels, 0.42, atol=1e-12, rtol=0)


def test_presmooth_preserves_mass_of_impulse():
    img_px = np.zeros((16, 16))
    img_px[4, 11] = 1.0
    out = presmooth(Image(img_px), 1.0)
    assert abs(out.pixels.sum() - 1.0) <= 1e-12
    assert np.all(out.pixels >= 0.0)
    assert out.pixels[4, 11] == out.pixels.max()


def test_presmooth_kernel_radius():
    # sigma = 1 -> radius 3: an impulse reaches exactly 3 pixels out
    img_px = np.zeros((16, 16))
    img_px[8, 8] = 1.0
    out = presmooth(Image(img_px), 1.0).pixels
    assert out[8, 5] > 0.0 and out[8, 11] > 0.0
    assert out[8, 4] == 0.0 and out[8, 12] == 0.0


def test_presmooth_rejects_bad_sigma():
    img = Image(np.zeros((4, 4)))
    with pytest.raises(InvalidPsf):
        presmooth(img, 0.0)
    with pytest.raises(InvalidPsf):
        presmooth(img, np.nan)


def test_hamiltonian_matches_hand_oracle():
    ham = assemble_hamiltonian(Image(np.zeros((3, 3))), 1.0)
    assert np.array_equal(ham.matrix.toarray(), LAPLACIAN_3X3)


def test_hamiltonian_interior_diagonal():
    px = np.zeros((3, 3))
    px[1, 1] = 0.5
    ham = assemble_hamiltonian(Image(px), 4.0)
    assert ham.matrix[4, 4] == 0.5 + 4 * 4.0


def test_hamiltonian_corner_diagonal():
    ham = assemble_hamiltonian(Image(np.zeros((4, 4))), 3.0)
    for corner in (0, 3, 12, 15):
        assert ham.matrix[corner, corner] == 2 * 3.0


def test_hamiltonian_no_wrap_across_rows():
    ham = assemble_hamiltonian(Image(np.zeros((4, 4))), 1.0)
    mat = ham.matrix
    for row_end in (3, 7, 11):
        assert mat[row_end, row_end + 1] == 0.0
        assert mat[row_end + 1, row_end] == 0.0


def test_hamiltonian_structure_invariants():
    ham = assemble_hamiltonian(random_potential(2, 5, 7), 2.5)
    mat = ham.matrix
    assert (mat - mat.T).nnz == 0
    per_row = np.diff(mat.indptr)
    assert per_row.max() <= 5
    off = mat - sp.diags(mat.diagonal())
    vals = off.tocoo().data
    assert np.all(np.isclose(vals, -2.5, atol=0, rtol=1e-15))
    assert ham.n_sites == 35


def test_hamiltonian_potential_on_diagonal():
    pot = random_potential(3, 4, 4)
    planck = 1.7
    ham = assemble_hamiltonian(pot, planck)
    deg = np.array(
        [
            len([d for d in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1))
                 if 0 <= d[0] < 4 and 0 <= d[1] < 4])
            for r in range(4)
            for c in range(4)
        ],
        dtype=np.float64,
    )
    want = pot.pixels.reshape(-1) + planck * deg
    assert np.allclose(ham.matrix.diagonal(), want, atol=0, rtol=1e-15)


def test_hamiltonian_rejects_unnormalized_potential():
    with pytest.raises(DomainError):
        assemble_hamiltonian(Image(np.full((3, 3), 1.5)), 1.0)
    with pytest.raises(DomainError):
        assemble_hamiltonian(Image(np.zeros((3, 3))), -1.0)


def test_flat_potential_zero_mode():
    ham = assemble_hamiltonian(Image(np.zeros((4, 4))), 1.0)
    basis = eigendecompose(ham, 0.5, method="dense")
    assert abs(basis.energies[0]) <= 1e-10
    vec = basis.vectors[:, 0]
    assert np.allclose(np.abs(vec), 0.25, atol=1e-10, rtol=0)


def test_lanczos_matches_dense_on_8x8():
    pot = random_potential(7, 8, 8)
    ham = assemble_hamiltonian(pot, 4.0)
    dense = eigendecompose(ham, 6.0, method="dense")
    lanc = eigendecompose(ham, 6.0, method="lanczos")
    assert dense.size == lanc.size and dense.size >= 1
    rel = np.abs(dense.energies - lanc.energies) / np.maximum(1.0, np.abs(dense.energies))
    assert rel.max() <= 1e-8
    pd = dense.vectors @ dense.vectors.T
    pl = lanc.vectors @ lanc.vectors.T
    assert np.linalg.norm(pd - pl) <= 1e-6


def test_lanczos_deterministic():
    ham = assemble_hamiltonian(random_potential(8, 8, 8), 4.0)
    a = eigendecompose(ham, 6.0, method="lanczos")
    b = eigendecompose(ham, 6.0, method="lanczos")
    assert np.array_equal(a.energies, b.energies)
    assert np.array_equal(a.vectors, b.vectors)


def test_empty_basis_raised_on_both_paths():
    ham = assemble_hamiltonian(random_potential(9, 6, 6), 2.0)
    with pytest.raises(EmptyBasis):
        eigendecompose(ham, -1.0, method="dense")
    with pytest.raises(EmptyBasis):
        eigendecompose(ham, -1.0, method="lanczos")


def test_lanczos_fails_cleanly_on_tiny_budget():
    ham = assemble_hamiltonian(random_potential(10, 8, 8), 4.0)
    with pytest.raises(EigensolverFailure):
        eigendecompose(ham, 20.0, method="lanczos", max_dim=6)


def test_eigendecompose_validation():
    ham = assemble_hamiltonian(random_potential(11, 4, 4), 1.0)
    with pytest.raises(DomainError):
        eigendecompose(ham, 1.0, max_vectors=0)
    with pytest.raises(DomainError):
        eigendecompose(ham, np.nan)
    with pytest.raises(DomainError):
        eigendecompose(ham, 1.0, method="magic")


def test_max_vectors_caps_basis():
    ham = assemble_hamiltonian(random_potential(12, 6, 6), 1.0)
    full = eigendecompose(ham, 8.0, method="dense")
    assert full.size > 3
    capped = eigendecompose(ham, 8.0, max_vectors=3, method="dense")
    assert capped.size == 3
    assert np.allclose(capped.energies, full.energies[:3], atol=0, rtol=1e-14)
    capped_l = eigendecompose(ham, 8.0, max_vectors=3, method="lanczos")
    assert capped_l.size == 3
    rel = np.abs(capped_l.energies - full.energies[:3])
    assert rel.max() <= 1e-8 * max(1.0, np.abs(full.energies[:3]).max())


@given(st.integers(0, 2**31), st.floats(0.1, 10.0), st.floats(0.1, 10.0))
@settings(max_examples=25, deadline=None)
def test_cutoff_monotonicity_property(seed, c1, c2):
    lo, hi = sorted((c1, c2))
    ham = assemble_hamiltonian(random_potential(seed, 4, 4), 1.0)

    def count(cutoff):
        try:
            return eigendecompose(ham, cutoff, method="dense").size
        except EmptyBasis:
            return 0

    assert count(lo) <= count(hi)


def test_planck_doubling_never_grows_basis():
    pot = random_potential(13, 6, 6)
    for planck in (0.5, 1.0, 2.0, 4.0):
        t1 = eigendecompose(assemble_hamiltonian(pot, planck), 4.1, method="dense").size
        t2 = eigendecompose(
            assemble_hamiltonian(pot, 2 * planck), 4.1, method="dense"
        ).size
        assert t2 <= t1


def test_basis_invariants_on_build():
    ham = assemble_hamiltonian(random_potential(14, 8, 8), 4.0)
    basis = eigendecompose(ham, 6.0, method="lanczos")
    assert np.all(np.diff(basis.energies) >= -1e-12)
    gram = basis.vectors.T @ basis.vectors
    assert np.abs(np.diag(gram) - 1.0).max() <= 1e-10
    off = gram - np.diag(np.diag(gram))
    assert np.abs(off).max() <= 1e-8
    resid = ham.matrix @ basis.vectors - basis.vectors * basis.energies
    norms = np.linalg.norm(resid, axis=0)
    assert np.all(norms <= 1e-8 * np.maximum(1.0, np.abs(basis.energies)))


def test_dense_limit_constant():
    # the dense fallback covers exactly the grids up to 32x32
    assert DENSE_SITE_LIMIT == 1024


def test_save_load_round_trip(tmp_path):
    ham = assemble_hamiltonian(random_potential(15, 6, 6), 1.0)
    basis = eigendecompose(ham, 6.0, method="dense")
    path = tmp_path / "basis.npz"
    save_basis(path, basis, "fp123")
    loaded = load_basis(path, "fp123")
    assert loaded is not None
    energies, vectors = loaded
    assert np.array_equal(energies, basis.energies)
    assert np.array_equal(vectors, basis.vectors)
    assert load_basis(path, "other") is None
    assert load_basis(tmp_path / "missing.npz", "fp123") is None


def test_fingerprint_tracks_inputs():
    pot_a = random_potential(16, 6, 6)
    pot_b = random_potential(17, 6, 6)
    cfg = QabConfig()
    assert potential_fingerprint(pot_a, cfg) == potential_fingerprint(pot_a, cfg)
    assert potential_fingerprint(pot_a, cfg) != potential_fingerprint(pot_b, cfg)
    other = QabConfig(planck=2.0)
    assert potential_fingerprint(pot_a, cfg) != potential_fingerprint(pot_a, other)


def test_build_basis_uses_cache(tmp_path):
    obs = random_potential(18, 8, 8)
    cfg = QabConfig(energy_cutoff=6.0)
    first = build_basis(obs, cfg, cache_dir=tmp_path)
    files = list(tmp_path.glob("basis-*.npz"))
    assert len(files) == 1
    second = build_basis(obs, cfg, cache_dir=tmp_path)
    assert np.array_equal(first.energies, second.energies)
    assert np.array_equal(first.vectors, second.vectors)
    # a different planck must not reuse the cached decomposition
    build_basis(obs, QabConfig(planck=8.0, energy_cutoff=6.0), cache_dir=tmp_path)
    assert len(list(tmp_path.glob("basis-*.npz"))) == 2


def test_tampered_cache_is_rejected(tmp_path):
    obs = random_potential(19, 6, 6)
    cfg = QabConfig(energy_cutoff=6.0)
    basis = build_basis(obs, cfg, cache_dir=tmp_path)
    cache_file = next(tmp_path.glob("basis-*.npz"))
    bad_vectors = basis.vectors.copy()
    bad_vectors[:, 0] *= 1.1  # no longer unit norm
    with np.load(cache_file) as data:
        fp = str(data["fingerprint"])
    np.savez(
        cache_file,
        energies=basis.energies,
        vectors=bad_vectors,
        fingerprint=np.array(fp),
    )
    with pytest.raises(EigensolverFailure):
        build_basis(obs, cfg, cache_dir=tmp_path)


def test_build_basis_is_pure_function_of_observation():
    obs = random_potential(20, 8, 8)
    a = build_basis(obs, QabConfig(energy_cutoff=6.0))
    b = build_basis(obs, QabConfig(energy_cutoff=6.0))
    assert np.array_equal(a.vectors, b.vectors)
