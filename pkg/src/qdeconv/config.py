"""Flat key-value run configuration shared by all CLI commands.

Config files are plain text, one `key = value` per line, `#` comments,
with dotted keys grouping related knobs (psf.sigma, solver.gamma, ...).
Command-line flags override file values.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .admm import SolverConfig
from .basis import QabConfig
from .blur import GaussianPsf, make_gaussian_psf
from .denoiser import ThresholdSpec
from .errors import UsageError
from .poisson import NoiseSpec

__all__ = ["RunConfig", "parse_config_text", "load_run_config", "CONFIG_KEYS"]


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a degrade/deconvolve run, with usable defaults."""

    input: str | None = None
    output_dir: str | None = None
    method: str = "qab_pnp"
    realizations: int = 1
    tv_weight: float = 0.05
    psf_size: int = 4
    psf_sigma: float = 3.0
    snr_db: float = 20.0
    seed: int = 7
    epsilon: float = 1e-6
    qab_planck: float = 4.0
    qab_sigma_smooth: float = 7.0
    qab_energy_cutoff: float = 4.1
    qab_max_vectors: int = 1024
    threshold_s: int = 96
    threshold_rho: float = 240.0
    use_omp: bool = True
    lambda0: float = 1.3
    gamma: float = 1.01
    max_iters: int = 50
    xstep_iters: int = 20
    xstep_lr: float = 1.0
    stop_tol: float = 1e-4

    def validate(self) -> "RunConfig":
        if self.method not in ("qab_pnp", "tv_admm"):
            raise UsageError(f"unknown method {self.method!r}")
        if self.realizations < 1:
            raise UsageError(f"realizations must be >= 1, got {self.realizations}")
        return self

    # builders for the domain objects

    def psf(self) -> GaussianPsf:
        return make_gaussian_psf(self.psf_size, self.psf_sigma)

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(target_snr_db=self.snr_db, seed=self.seed)

    def qab_config(self) -> QabConfig:
        return QabConfig(
            planck=self.qab_planck,
            sigma_smooth=self.qab_sigma_smooth,
            energy_cutoff=self.qab_energy_cutoff,
            max_vectors=self.qab_max_vectors,
        )

    def threshold_spec(self) -> ThresholdSpec:
        return ThresholdSpec(keep_all=self.threshold_s, rolloff=self.threshold_rho)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            lambda0=self.lambda0,
            gamma=self.gamma,
            max_iters=self.max_iters,
            stop_tol=self.stop_tol,
            xstep_iters=self.xstep_iters,
            xstep_lr=self.xstep_lr,
        )


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {raw!r}")


# dotted config key -> (RunConfig field, parser)
CONFIG_KEYS = {
    "input": ("input", str),
    "output_dir": ("output_dir", str),
    "method": ("method", str),
    "realizations": ("realizations", int),
    "tv_weight": ("tv_weight", float),
    "psf.size": ("psf_size", int),
    "psf.sigma": ("psf_sigma", float),
    "noise.snr_db": ("snr_db", float),
    "noise.seed": ("seed", int),
    "noise.epsilon": ("epsilon", float),
    "qab.planck": ("qab_planck", float),
    "qab.sigma_smooth": ("qab_sigma_smooth", float),
    "qab.energy_cutoff": ("qab_energy_cutoff", float),
    "qab.max_vectors": ("qab_max_vectors", int),
    "threshold.s": ("threshold_s", int),
    "threshold.rho": ("threshold_rho", float),
    "threshold.use_omp": ("use_omp", _parse_bool),
    "solver.lambda0": ("lambda0", float),
    "solver.gamma": ("gamma", float),
    "solver.max_iters": ("max_iters", int),
    "solver.xstep_iters": ("xstep_iters", int),
    "solver.xstep_lr": ("xstep_lr", float),
    "solver.stop_tol": ("stop_tol", float),
}


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    """Raw key -> value strings from one config file."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise UsageError(f"{origin}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = body.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise UsageError(f"{origin}:{lineno}: unknown config key {key!r}")
        out[key] = value.strip()
    return out


def _coerce(pairs: dict[str, str]) -> dict[str, object]:
    coerced: dict[str, object] = {}
    for key, raw in pairs.items():
        if key not in CONFIG_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        field_name, parser = CONFIG_KEYS[key]
        try:
            coerced[field_name] = parser(raw)
        except UsageError:
            raise
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key}: {raw!r} ({exc})") from None
    return coerced


def load_run_config(
    config_path: str | None,
    overrides: dict[str, str] | None = None,
    env_output_dir: str | None = None,
) -> RunConfig:
    """Defaults, then file values, then environment, then flag overrides."""
    cfg = RunConfig()
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise UsageError(f"config file not found: {config_path}")
        cfg = replace(cfg, **_coerce(parse_config_text(path.read_text(), str(path))))
    if env_output_dir:
        cfg = replace(cfg, output_dir=env_output_dir)
    if overrides:
        cfg = replace(cfg, **_coerce(overrides))
    return cfg.validate()


def config_snapshot(cfg: RunConfig) -> str:
    """Dotted-key dump of the effective configuration."""
    by_field = {f: k for k, (f, _) in CONFIG_KEYS.items()}
    lines = []
    for f in fields(RunConfig):
        value = asdict(cfg)[f.name]
        if value is None:
            continue
        lines.append(f"{by_field[f.name]} = {value}")
    return "\n".join(lines) + "\n"
