"""End-to-end acceptance checks for the restoration pipeline.

Each test covers one headline guarantee and prints a one-line summary
with the measured numbers, so `pytest -v -s tests/test_acceptance.py`
reads as a checklist.
"""
import time

import numpy as np
import pytest

from qdeconv import cli
from qdeconv.admm import SolverConfig, run, run_tv_admm
from qdeconv.basis import QabConfig, assemble_hamiltonian, build_basis
from qdeconv.blur import BlurOperator, make_gaussian_psf
from qdeconv.denoiser import QabDenoiser, ThresholdSpec
from qdeconv.fixtures import FIXTURE_NAMES, load_fixture
from qdeconv.image import Image, make_synthetic, vectorize
from qdeconv.metrics import psnr, snr_db
from qdeconv.poisson import (
    NoiseSpec,
    PoissonProblem,
    degrade,
    gradient,
    neg_log_likelihood,
    sample_observation,
)

THRESHOLD = ThresholdSpec(keep_all=96, rolloff=240.0)
DEFAULT_PSF = make_gaussian_psf(4, 3.0)


@pytest.fixture(scope="module")
def fixture_runs():
    """Default-config solve of every bundled fixture at 20 dB, seed 7."""
    out = {}
    for name in FIXTURE_NAMES:
        truth = vectorize(load_fixture(name))
        blur = BlurOperator(DEFAULT_PSF, 64, 64)
        observed = degrade(truth, blur, NoiseSpec(20.0, 7)).observed
        x_hat, trace = run(
            observed, blur, QabConfig(), THRESHOLD, SolverConfig(), truth=truth
        )
        out[name] = (x_hat, trace, truth, observed)
    return out


def test_acceptance_1_iterative_eigensolver_matches_dense_oracle():
    img = make_synthetic(16)
    cfg = QabConfig()
    start = time.perf_counter()
    lanc = build_basis(img, cfg, method="lanczos")
    elapsed = time.perf_counter() - start
    dense = build_basis(img, cfg, method="dense")
    assert lanc.size == dense.size and lanc.size > 0
    rel = np.abs(lanc.energies - dense.energies) / np.abs(dense.energies)
    assert rel.max() <= 1e-8
    frob = float(np.linalg.norm(lanc.vectors @ lanc.vectors.T - dense.vectors @ dense.vectors.T))
    assert frob <= 1e-6
    assert elapsed < 5.0
    print(
        f"ACCEPTANCE 1 PASS: {lanc.size} eigenpairs, eigenvalue rel err "
        f"{rel.max():.2e}, projector distance {frob:.2e}, {elapsed:.3f} s"
    )


def test_acceptance_2_hamiltonian_matches_handwritten_stencil():
    # 3x3 grid: row-major index i = 3r + c; -1 couples in-grid 4-neighbors,
    # the diagonal counts them (2 corner, 3 edge, 4 center), no wraparound.
    laplacian = np.array(
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
    rng = np.random.default_rng(2)
    pix = rng.random((3, 3))
    planck = 4.0
    oracle = planck * laplacian + np.diag(pix.reshape(-1))
    ham = assemble_hamiltonian(Image(pix), planck)
    assert np.array_equal(ham.matrix.toarray(), oracle)
    print(
        "ACCEPTANCE 2 PASS: 9x9 operator equals the hand-written stencil "
        "exactly (corner, edge and center rows all exercised)"
    )


def test_acceptance_3_gradient_matches_finite_differences_and_bound():
    worst_rel = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        blur = BlurOperator(make_gaussian_psf(3, 1.5), 6, 6)
        y = sample_observation(blur.apply(rng.random(36)), 200.0, seed)
        prob = PoissonProblem(blur, y)
        x = 0.2 + 0.6 * rng.random(36)
        g = gradient(x, prob)
        fd = np.zeros(36)
        h = 1e-6
        for i in range(36):
            e = np.zeros(36)
            e[i] = h
            fd[i] = (neg_log_likelihood(x + e, prob) - neg_log_likelihood(x - e, prob)) / (2 * h)
        worst_rel = max(worst_rel, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    assert worst_rel <= 1e-5

    rng = np.random.default_rng(99)
    blur = BlurOperator(make_gaussian_psf(3, 1.5), 6, 6)
    y = sample_observation(blur.apply(rng.random(36)), 200.0, 99)
    prob = PoissonProblem(blur, y)
    # independent bound: ||grad|| <= ||H^T|| ||y|| / eps + ||H^T 1||
    op_norm = float(np.abs(blur.psf.weights).sum())
    bound = (
        op_norm * float(np.linalg.norm(y)) / prob.epsilon
        + float(np.linalg.norm(blur.apply_adjoint(np.ones(36))))
    )
    margin = np.inf
    for _ in range(100):
        g = gradient(rng.random(36), prob)
        norm = float(np.linalg.norm(g))
        assert norm <= bound
        margin = min(margin, bound / max(norm, 1e-300))
    print(
        f"ACCEPTANCE 3 PASS: gradient vs central differences rel err "
        f"{worst_rel:.2e} on 10 instances; norm bound holds on 100 points "
        f"(tightest margin {margin:.1e}x)"
    )


def test_acceptance_4_complete_basis_and_omp_projection_gap():
    rng = np.random.default_rng(0)
    small = Image(rng.random((4, 4)))
    basis = build_basis(small, QabConfig(energy_cutoff=40.0, max_vectors=16), method="dense")
    assert basis.size == 16
    spec = ThresholdSpec(keep_all=16, rolloff=1.0)
    v = rng.random(16)
    dev_full = np.abs(QabDenoiser(basis=basis, spec=spec, use_omp=False)(v) - v).max()
    dev_omp = np.abs(QabDenoiser(basis=basis, spec=spec, use_omp=True)(v) - v).max()
    assert dev_full <= 1e-8 and dev_omp <= 1e-8

    truth = vectorize(make_synthetic(64))
    blur = BlurOperator(DEFAULT_PSF, 64, 64)
    observed = degrade(truth, blur, NoiseSpec(20.0, 7)).observed
    psnrs = {}
    for use_omp in (True, False):
        x_hat, _ = run(
            observed, blur, QabConfig(), THRESHOLD, SolverConfig(), use_omp=use_omp
        )
        psnrs[use_omp] = psnr(truth, x_hat)
    gap = abs(psnrs[True] - psnrs[False])
    assert gap <= 1.7
    print(
        f"ACCEPTANCE 4 PASS: complete 16-vector basis reproduces inputs to "
        f"{max(dev_full, dev_omp):.1e}; OMP vs full-projection PSNR gap "
        f"{gap:.3f} dB (omp {psnrs[True]:.2f}, full {psnrs[False]:.2f})"
    )


def test_acceptance_5_qab_beats_tv_by_one_db():
    truth = vectorize(make_synthetic(64))
    blur = BlurOperator(DEFAULT_PSF, 64, 64)
    start = time.perf_counter()
    qab_psnrs = []
    tv_psnrs = []
    for i in range(20):
        spec = NoiseSpec(20.0, 7 + cli.REALIZATION_SEED_STRIDE * i)
        observed = degrade(truth, blur, spec).observed
        x_qab, _ = run(observed, blur, QabConfig(), THRESHOLD, SolverConfig())
        x_tv, _ = run_tv_admm(observed, blur, SolverConfig(), 0.05)
        qab_psnrs.append(psnr(truth, x_qab))
        tv_psnrs.append(psnr(truth, x_tv))
    elapsed = time.perf_counter() - start
    mean_qab = float(np.mean(qab_psnrs))
    mean_tv = float(np.mean(tv_psnrs))
    assert mean_qab - mean_tv >= 1.0
    assert elapsed <= 600.0
    print(
        f"ACCEPTANCE 5 PASS: 20-realization mean PSNR {mean_qab:.2f} dB (adaptive "
        f"basis) vs {mean_tv:.2f} dB (TV), margin {mean_qab - mean_tv:.2f} dB, "
        f"{elapsed:.0f} s for both"
    )


def test_acceptance_6_convergence_diagnostics(fixture_runs):
    _, trace, _, _ = fixture_runs["chirp"]
    lam = trace.column("lambda")
    oracle = [1.3 * 1.01**k for k in range(trace.iterations)]
    assert all(l == o for l, o in zip(lam, oracle))

    pr = trace.column("primal_res")
    c1 = (pr[:3] * lam[:3]).max()
    assert np.all(pr * lam <= 3.0 * c1)

    gap = trace.column("denoiser_gap_times_lambda")
    assert np.all(gap <= 3.0 * gap[0])

    err = trace.column("rmse")
    half = trace.iterations // 2
    ratios = err[half + 1 :] / err[half:-1]
    assert np.all(ratios <= 1.02)
    print(
        "ACCEPTANCE 6 PASS: penalty schedule exact, primal residual within "
        f"3x its early bound (C1={c1:.3g}), denoiser gap within 3x its "
        f"initial value, log-RMSE non-increasing over the final {len(ratios)} "
        f"steps (worst ratio {ratios.max():.4f})"
    )


def test_acceptance_7_default_config_converges_on_all_fixtures(fixture_runs):
    counts = {}
    for name, (_, trace, _, _) in fixture_runs.items():
        assert trace.converged, name
        assert trace.iterations <= 30, name
        counts[name] = trace.iterations
    print(
        "ACCEPTANCE 7 PASS: defaults converge in "
        + ", ".join(f"{name} {counts[name]}" for name in FIXTURE_NAMES)
        + " iterations (limit 30)"
    )


def test_acceptance_8_cli_runs_are_byte_identical(tmp_path):
    src = tmp_path / "chirp.pgm"
    assert cli.main(["synth", "--kind", "chirp", "--out", str(src)]) == 0
    deg = [tmp_path / "deg_a", tmp_path / "deg_b"]
    for d in deg:
        assert cli.main(["degrade", "--input", str(src), "--output-dir", str(d)]) == 0
    assert (deg[0] / "degraded.pgm").read_bytes() == (deg[1] / "degraded.pgm").read_bytes()
    out = [tmp_path / "out_a", tmp_path / "out_b"]
    for i, o in enumerate(out):
        assert cli.main(["deconv", "--input", str(deg[i]), "--output-dir", str(o)]) == 0
    assert (out[0] / "restored.pgm").read_bytes() == (out[1] / "restored.pgm").read_bytes()
    assert (out[0] / "trace.csv").read_bytes() == (out[1] / "trace.csv").read_bytes()
    print(
        "ACCEPTANCE 8 PASS: repeated CLI degrade and deconv runs are "
        "byte-identical (degraded PGM, restored PGM, trace CSV)"
    )


def test_acceptance_9_snr_targeting_on_all_fixtures():
    worst = 0.0
    blur = BlurOperator(DEFAULT_PSF, 64, 64)
    for name in FIXTURE_NAMES:
        truth = vectorize(load_fixture(name))
        b = blur.apply(truth)
        for target in (10.0, 15.0, 20.0):
            result = degrade(truth, blur, NoiseSpec(target, 7))
            measured = snr_db(b, result.observed - b)
            assert measured == pytest.approx(result.achieved_snr_db, rel=1e-12)
            assert abs(measured - target) <= 0.25, (name, target, measured)
            worst = max(worst, abs(measured - target))
    print(
        f"ACCEPTANCE 9 PASS: 10/15/20 dB targets hit on all fixtures, worst "
        f"deviation {worst:.3f} dB (tolerance 0.25)"
    )
