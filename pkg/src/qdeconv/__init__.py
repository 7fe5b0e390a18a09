"""Poisson image deconvolution with an adaptive Schroedinger eigenbasis.

The pipeline: blur + Poisson noise at a target SNR (poisson), an
orthonormal basis adapted to the observation (basis), a sparse
thresholding denoiser on that basis (denoiser), and a plug-and-play
ADMM loop tying them together (admm).
"""

from .admm import (
    AdmmState,
    DiagnosticsTrace,
    SolverConfig,
    run,
    run_tv_admm,
    tv_prox,
)
from .basis import (
    Hamiltonian,
    QabBasis,
    QabConfig,
    assemble_hamiltonian,
    build_basis,
    eigendecompose,
    presmooth,
)
from .blur import BlurOperator, GaussianPsf, make_gaussian_psf
from .config import RunConfig, load_run_config
from .denoiser import (
    QabDenoiser,
    SparseCoeffs,
    ThresholdSpec,
    apply_threshold,
    denoise,
    full_project,
    omp_project,
    reconstruct,
)
from .errors import (
    DimensionError,
    DomainError,
    EigensolverFailure,
    EmptyBasis,
    InvalidImage,
    InvalidPsf,
    NumericalFailure,
    QdeconvError,
    SnrUnreachable,
    TooSmall,
    UsageError,
)
from .fixtures import FIXTURE_NAMES, fixture_path, load_fixture
from .image import (
    Image,
    devectorize,
    make_bumps,
    make_disks,
    make_synthetic,
    normalize,
    read_pgm,
    vectorize,
    write_pgm,
)
from .metrics import QualityReport, psnr, quality_report, rmse, snr_db, ssim
from .poisson import (
    DegradeResult,
    NoiseSpec,
    PoissonProblem,
    degrade,
    gradient,
    gradient_norm_bound,
    neg_log_likelihood,
    sample_observation,
)

__version__ = "0.1.0"
