"""Run configuration with the default hyperparameters of both model variants."""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

SCHEMA_VERSION = 1

LIKELIHOODS = ("nb", "var", "gaussian")
KERNELS = ("gaussian", "periodic", "categorical")
DEFAULT_ORDER = ("q", "xi", "u", "kernel", "alpha", "alpha0", "z", "p", "link", "atoms", "capture", "hyper")


class ConfigError(ValueError):
    pass


@dataclass
class GaussianKernelPriors:
    mu_r: float = 0.5
    sigma_r: float = 0.5
    eta1: float = 5.0
    eta2: float = 1.0
    mu_h: float = -5.0
    sigma_h: float = 0.5
    kappa1: float = 5.0
    kappa2: float = 1.0


@dataclass
class PeriodicKernelPriors:
    mu_r: float = -2.0
    sigma_r: float = 0.5
    eta1: float = 5.0
    eta2: float = 1.0
    mu_h: float = -1.0
    sigma_h: float = 0.5
    kappa1: float = 26.0
    kappa2: float = 1.0


@dataclass
class CategoricalKernelPriors:
    concentration: float = 1.0


@dataclass
class ConcentrationPriors:
    alpha_shape: float = 1.0
    alpha_rate: float = 1.0
    alpha0_shape: float = 1.0
    alpha0_rate: float = 1.0


@dataclass
class NbPriors:
    """Unset entries are filled from moment estimates of the data."""

    alpha_mu2: float | None = None
    m_b: list | None = None
    nu1: float = 5.0
    nu2: float | None = None
    capture_a: float | None = None
    capture_b: float | None = None
    baynorm_global_mean: float = 0.06


@dataclass
class VarPriors:
    """L0 and Phi0 default to pooled least squares; Phi0 is shrunk by J0^(2/G)."""

    V0_scale: float = 100.0
    omega0: float | None = None
    J0: int | None = None
    L0: list | None = None
    Phi0: list | None = None


@dataclass
class McmcSettings:
    iterations: int = 10000
    burn_in: int = 8000
    thin: int = 2


@dataclass
class ModelConfig:
    likelihood: str = "nb"
    kernel: str = "gaussian"
    J: int = 30
    seed: int = 0
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    concentration: ConcentrationPriors = field(default_factory=ConcentrationPriors)
    gaussian_kernel: GaussianKernelPriors = field(default_factory=GaussianKernelPriors)
    periodic_kernel: PeriodicKernelPriors = field(default_factory=PeriodicKernelPriors)
    categorical_kernel: CategoricalKernelPriors = field(default_factory=CategoricalKernelPriors)
    nb: NbPriors = field(default_factory=NbPriors)
    var: VarPriors = field(default_factory=VarPriors)
    update_order: list | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.likelihood not in LIKELIHOODS:
            raise ConfigError(f"likelihood: expected one of {LIKELIHOODS}, got {self.likelihood!r}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"kernel: expected one of {KERNELS}, got {self.kernel!r}")
        if int(self.J) < 1:
            raise ConfigError("J: truncation must be at least 1")
        m = self.mcmc
        if m.iterations < 0 or m.burn_in < 0 or m.thin < 1:
            raise ConfigError("mcmc: iterations and burn_in must be >= 0, thin >= 1")
        if m.burn_in > m.iterations:
            raise ConfigError("mcmc.burn_in: must not exceed iterations")
        if self.update_order is not None:
            bad = set(self.update_order) - set(DEFAULT_ORDER)
            if bad:
                raise ConfigError(f"update_order: unknown blocks {sorted(bad)}")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}")

    @property
    def order(self):
        return tuple(self.update_order) if self.update_order else DEFAULT_ORDER

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **kw):
        return config_from_dict({**self.to_dict(), **kw})


_NESTED = {
    "mcmc": McmcSettings,
    "concentration": ConcentrationPriors,
    "gaussian_kernel": GaussianKernelPriors,
    "periodic_kernel": PeriodicKernelPriors,
    "categorical_kernel": CategoricalKernelPriors,
    "nb": NbPriors,
    "var": VarPriors,
}


def config_from_dict(d):
    d = dict(d or {})
    known = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw = {}
    for key, value in d.items():
        if key in _NESTED:
            cls = _NESTED[key]
            if isinstance(value, cls):
                kw[key] = value
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected a mapping")
            names = {f.name for f in dataclasses.fields(cls)}
            extra = set(value) - names
            if extra:
                raise ConfigError(f"{key}: unknown keys {sorted(extra)}")
            kw[key] = cls(**value)
        else:
            kw[key] = value
    try:
        return ModelConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    import yaml

    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    if "schema_version" not in raw:
        raise ConfigError("missing required config key: schema_version")
    return config_from_dict(raw)


def dump_config(cfg, path):
    import yaml

    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
