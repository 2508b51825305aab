import json
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from execution.ensemble import TruncationMode, WignerSpec, make_wigner_spec

logger = logging.getLogger(__name__)

LOG_DIR = "logs"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

KNOWN_CHECKS = (
    "rate", "delta_n", "variance", "moment", "fluctuation", "bai",
    "beta_exceedance", "leave_one_out_moments", "an_bn", "identities", "quadratic_form", "rank_one",
    "lawcheck",
)
COMMANDS = ("simulate", "rate", "variance", "bai", "diag", "lawcheck")


def configure_logging(prefix: str = "server", level=logging.INFO) -> str:
    """
    Root logger setup shared by the server and the CLI: dated file under logs/ plus the console.

    Returns:
        Path of the log file.
    """
    os.makedirs(LOG_DIR, exist_ok=True)
    log_file = os.path.join(LOG_DIR, f"{prefix}-{datetime.now().strftime('%Y%m%d')}.log")
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(log_file, encoding='utf-8'),
            logging.StreamHandler()
        ],
        force=True
    )
    # numba's compiler logs at DEBUG/INFO are noise here
    logging.getLogger("numba").setLevel(logging.WARNING)
    return log_file


class EnsembleConfig(BaseModel):
    kind: str = "gaussian"
    params: Dict[str, float] = {}
    sigma: float = 1.0
    diag_kind: Optional[str] = None
    diag_params: Dict[str, float] = {}
    truncate: bool = False
    truncation_mode: TruncationMode = TruncationMode.ZERO

    def wigner_spec(self, n: int, seed: int = 0) -> WignerSpec:
        return make_wigner_spec(
            n, kind=self.kind, params=self.params, sigma=self.sigma, seed=seed, truncate=self.truncate,
            diag_kind=self.diag_kind, diag_params=self.diag_params or None,
            truncation_mode=self.truncation_mode,
        )


class BaiConfig(BaseModel):
    A: float = 16.0
    B: float = 3.0
    eps: float = 2.0
    v_scale: float = 2.0  # v = v_scale * n^{-1/2}


class DiagConfig(BaseModel):
    n_grid: List[int] = [64, 128]
    v_grid: List[float] = [0.25, 0.5]
    u: float = 0.0
    replicas: int = 100
    indices: Optional[List[int]] = None  # None = every index
    identity_n_grid: List[int] = [8, 16, 32]
    identity_matrices: int = 50
    identity_points: int = 10
    rank_one_trials: int = 1000
    rank_one_n_max: int = 50
    quadratic_form_reps: int = 100000
    quadratic_form_matrices: int = 5
    quadratic_form_n: int = 10
    quadratic_form_kinds: List[str] = ["gaussian", "rademacher"]

    @field_validator("v_grid")
    @classmethod
    def _positive_v(cls, v):
        if any(not x > 0 for x in v):
            raise ValueError("diag v_grid entries must be > 0")
        return v

    @field_validator("replicas", "identity_matrices", "identity_points", "rank_one_trials")
    @classmethod
    def _at_least_one(cls, v):
        if v < 1:
            raise ValueError("must be >= 1")
        return v


class RunConfig(BaseModel):
    """
    One experiment: the ensemble, the sizes, the replicas and the checks to run on them.
    """
    ensemble: EnsembleConfig = EnsembleConfig()
    n_grid: List[int] = [64]
    replicas: int = 1
    z_grid: List[Tuple[float, float]] = [(0.0, 1.0)]
    checks: List[str] = []
    seed: int = 0
    workers: int = 1
    out: Optional[str] = None
    format: Literal["csv", "json"] = "csv"
    c0: float = 2.0
    bai: BaiConfig = BaiConfig()
    diag: DiagConfig = DiagConfig()
    truncate: Optional[bool] = Field(default=None, description="overrides ensemble.truncate when set")

    @field_validator("n_grid")
    @classmethod
    def _ascending(cls, v):
        if not v:
            raise ValueError("n_grid must not be empty")
        if any(n < 1 for n in v):
            raise ValueError("n_grid entries must be >= 1")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"n_grid must be strictly ascending, got {v}")
        return v

    @field_validator("z_grid")
    @classmethod
    def _upper_half_plane(cls, v):
        for u, im in v:
            if not im > 0:
                raise ValueError(f"z_grid point ({u}, {im}) is not in the upper half-plane")
        return v

    @field_validator("checks")
    @classmethod
    def _known_checks(cls, v):
        unknown = sorted(set(v) - set(KNOWN_CHECKS))
        if unknown:
            raise ValueError(f"unknown checks: {unknown}")
        return v

    @model_validator(mode="after")
    def _ranges(self):
        if self.replicas < 1:
            raise ValueError(f"replicas must be >= 1, got {self.replicas}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.truncate is not None:
            self.ensemble = self.ensemble.model_copy(update={"truncate": self.truncate})
        return self

    @property
    def zs(self) -> np.ndarray:
        return np.array([complex(u, v) for u, v in self.z_grid])

    def canonical_json(self) -> str:
        """Sorted-key JSON of every field except the output location; the basis of the config hash."""
        return json.dumps(self.model_dump(mode="json", exclude={"out", "workers"}), sort_keys=True,
                          separators=(",", ":"))


def _grid(us, vs) -> List[Tuple[float, float]]:
    return [(u, v) for v in vs for u in us]


_DEFAULTS: Dict[str, dict] = {
    "simulate": {"n_grid": [64], "replicas": 4},
    "rate": {"n_grid": [128, 256, 512, 1024], "replicas": 100, "checks": ["rate", "delta_n"]},
    "variance": {
        "n_grid": [256, 512],
        "replicas": 500,
        "z_grid": _grid([-3.0, -1.5, 0.0, 1.5, 3.0], [0.2, 0.5, 1.0]),
        "checks": ["variance", "moment", "fluctuation"],
    },
    "bai": {"n_grid": [256], "replicas": 20, "checks": ["bai"]},
    "diag": {
        "n_grid": [64, 128],
        "replicas": 100,
        "checks": ["beta_exceedance", "leave_one_out_moments", "an_bn", "identities", "quadratic_form",
                   "rank_one"],
    },
    "lawcheck": {"n_grid": [1], "checks": ["lawcheck"]},
}


def default_config(command: str) -> RunConfig:
    if command not in _DEFAULTS:
        raise ValueError(f"no default configuration for command {command!r}")
    return RunConfig.model_validate(_DEFAULTS[command])


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Read a RunConfig from JSON. Raises FileNotFoundError, json.JSONDecodeError or pydantic.ValidationError.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    logger.info(f"Loaded config {path}")
    return RunConfig.model_validate(json.loads(text))
