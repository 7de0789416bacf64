"""Trainable state of the paired-inducing-point GP factorization model.

All positive quantities (lengthscales, variances, noise, the diagonal of the
variational Cholesky factor) are stored in unconstrained form and mapped
through softplus on access, so the optimizer always works on raw values.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidConfig
from .kernels import PairedKernelParams, RbfParams
from .transforms import inv_softplus, softplus

FACTOR_INIT_STD = 0.1
INDUCING_INIT_STD = 1.0


@dataclass(frozen=True)
class ModelConfig:
    num_users: int
    num_items: int
    rank: int = 8
    num_inducing: int = 128
    seed: int = 0
    base_jitter: float = 1e-6
    global_mean_centering: bool = True

    def validate(self):
        for name in ("num_users", "num_items", "rank", "num_inducing"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidConfig(f"{name} must be a positive integer, got {value!r}")
        if not self.base_jitter > 0:
            raise InvalidConfig("base_jitter must be positive")


@dataclass
class LatentFactors:
    A: np.ndarray  # (I, r) user latents
    B: np.ndarray  # (J, r) item latents


@dataclass
class InducingPairs:
    ZA: np.ndarray  # (m, r)
    ZB: np.ndarray  # (m, r)


@dataclass
class VariationalDistribution:
    """q(u) = N(mu, S S^T) with S lower triangular.

    ``scale_raw`` holds S with its diagonal in unconstrained form.
    """

    mu: np.ndarray
    scale_raw: np.ndarray

    @property
    def scale(self):
        S = np.tril(self.scale_raw)
        idx = np.diag_indices_from(S)
        S[idx] = softplus(self.scale_raw[idx])
        return S

    @property
    def covariance(self):
        S = self.scale
        return S @ S.T

    @classmethod
    def from_scale(cls, mu, scale):
        raw = np.tril(np.asarray(scale, dtype=np.float64)).copy()
        idx = np.diag_indices_from(raw)
        raw[idx] = inv_softplus(raw[idx])
        return cls(np.asarray(mu, dtype=np.float64).copy(), raw)


@dataclass
class NoiseModel:
    raw_noise: float = float(inv_softplus(1.0))

    @property
    def variance(self):
        return float(softplus(self.raw_noise))

    @classmethod
    def from_variance(cls, variance):
        return cls(float(inv_softplus(variance)))


@dataclass
class ModelState:
    config: ModelConfig
    factors: LatentFactors
    inducing: InducingPairs
    variational: VariationalDistribution
    kernel: PairedKernelParams = field(default_factory=PairedKernelParams)
    noise: NoiseModel = field(default_factory=NoiseModel)
    y_mean: float = 0.0

    def copy(self):
        return unflatten_params(flatten_params(self)[0].copy(), self)


def init_model(config):
    """Random initial state; deterministic in ``config.seed``."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    I, J, r, m = config.num_users, config.num_items, config.rank, config.num_inducing
    A = rng.normal(0.0, FACTOR_INIT_STD, size=(I, r))
    B = rng.normal(0.0, FACTOR_INIT_STD, size=(J, r))
    ZA = rng.normal(0.0, INDUCING_INIT_STD, size=(m, r))
    ZB = rng.normal(0.0, INDUCING_INIT_STD, size=(m, r))
    return ModelState(
        config=config,
        factors=LatentFactors(A, B),
        inducing=InducingPairs(ZA, ZB),
        variational=VariationalDistribution.from_scale(np.zeros(m), np.eye(m)),
        kernel=PairedKernelParams.from_values(1.0, 1.0, 1.0),
        noise=NoiseModel.from_variance(1.0),
    )


@dataclass(frozen=True)
class ParamLayout:
    """Named slices into the flat parameter vector."""

    slices: dict
    shapes: dict
    size: int

    def view(self, theta, name):
        return theta[self.slices[name]].reshape(self.shapes[name])


PARAM_ORDER = ("A", "B", "ZA", "ZB", "mu", "scale", "kernel", "noise")


def make_layout(config):
    I, J, r, m = config.num_users, config.num_items, config.rank, config.num_inducing
    shapes = {
        "A": (I, r),
        "B": (J, r),
        "ZA": (m, r),
        "ZB": (m, r),
        "mu": (m,),
        "scale": (m * (m + 1) // 2,),
        # user raw lengthscale, user raw variance, item raw lengthscale
        "kernel": (3,),
        "noise": (1,),
    }
    slices, offset = {}, 0
    for name in PARAM_ORDER:
        size = int(np.prod(shapes[name]))
        slices[name] = slice(offset, offset + size)
        offset += size
    return ParamLayout(slices, shapes, offset)


def flatten_params(state):
    layout = make_layout(state.config)
    theta = np.empty(layout.size)
    tril = np.tril_indices(state.config.num_inducing)
    k = state.kernel
    parts = {
        "A": state.factors.A,
        "B": state.factors.B,
        "ZA": state.inducing.ZA,
        "ZB": state.inducing.ZB,
        "mu": state.variational.mu,
        "scale": state.variational.scale_raw[tril],
        "kernel": [k.user_kernel.raw_lengthscale, k.user_kernel.raw_variance, k.item_kernel.raw_lengthscale],
        "noise": [state.noise.raw_noise],
    }
    for name in PARAM_ORDER:
        theta[layout.slices[name]] = np.ravel(parts[name])
    return theta, layout


def unflatten_params(theta, template):
    """Build a new ModelState from ``theta`` with config and y_mean taken from ``template``."""
    return state_from_vector(theta, template.config, template.y_mean)


def state_from_vector(theta, config, y_mean=0.0):
    layout = make_layout(config)
    theta = np.asarray(theta, dtype=np.float64)
    m = config.num_inducing
    scale_raw = np.zeros((m, m))
    scale_raw[np.tril_indices(m)] = layout.view(theta, "scale")
    kern = layout.view(theta, "kernel")
    kernel = PairedKernelParams(
        RbfParams(float(kern[0]), float(kern[1])),
        RbfParams(float(kern[2]), fixed_variance=True),
    )
    return ModelState(
        config=config,
        factors=LatentFactors(layout.view(theta, "A").copy(), layout.view(theta, "B").copy()),
        inducing=InducingPairs(layout.view(theta, "ZA").copy(), layout.view(theta, "ZB").copy()),
        variational=VariationalDistribution(layout.view(theta, "mu").copy(), scale_raw),
        kernel=kernel,
        noise=NoiseModel(float(layout.view(theta, "noise")[0])),
        y_mean=float(y_mean),
    )


def with_y_mean(state, y_mean):
    return replace(state, y_mean=float(y_mean))
