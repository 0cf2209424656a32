"""Latent inversion: recover the style that generated a target image.

Minimizes reconstruction_loss(target, G(latent)) + weight * prior(latent)
over W (one style, applied at every scale) or W+ (one style per scale)
with ADAM. The prior is the Gaussian energy in the corrected space V,
evaluated per style and summed over the scales of a stack. Optimization
starts at the empirical W mean and, following the usual projector recipe,
perturbs the latent with ramped-down Gaussian noise during the early
iterations: the noise enters the forward evaluation only, the update is
applied to the clean latent.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import features
from .errors import NumericalFailure
from .gaussian import (
    GaussianModel,
    mahalanobis_sq_batch,
    mahalanobis_sq_grad_batch,
    sample_latents,
)
from .generator import GeneratorBundle, synthesize_batch, synthesize_vjp_batch
from .seeding import STREAM_INVERT_NOISE, STREAM_W_STD, rng_from
from .spaces import SLOPE_W_TO_V, broadcast_style, lru_deriv, v_to_w, w_to_v

SPACE_W = "w"
SPACE_WPLUS = "wplus"
LOSS_PIXEL = "pixel-mse"
LOSS_PROXY = "random-feature-proxy"

_DEFAULT_LR = {SPACE_W: 0.1, SPACE_WPLUS: 0.05}
_DEFAULT_ITERATIONS = {SPACE_W: 1000, SPACE_WPLUS: 10000}

# The per-coordinate std of W used to scale the noise ramp is estimated by
# sampling the fitted model; the estimate is a property of the model alone,
# so the seed and sample count are package constants.
_W_STD_SEED = 7919
_W_STD_SAMPLES = 4096


@dataclass(frozen=True)
class NoiseRamp:
    initial_std_factor: float = 0.05
    ramp_fraction: float = 0.75

    def __post_init__(self):
        if not 0 < self.ramp_fraction <= 1:
            raise ValueError(f"ramp_fraction must be in (0, 1], got {self.ramp_fraction}")
        if self.initial_std_factor < 0:
            raise ValueError("initial_std_factor must be nonnegative")


@dataclass(frozen=True)
class AdamParams:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class InversionConfig:
    """Everything invert() needs besides the target and the networks.

    learning_rate and iterations default to the per-space values
    (0.1 / 1000 for W, 0.05 / 10000 for W+) when left as None.
    """

    target_space: str = SPACE_W
    prior_weight: float = 1e-4
    learning_rate: float | None = None
    iterations: int | None = None
    noise_ramp: NoiseRamp = field(default_factory=NoiseRamp)
    adam: AdamParams = field(default_factory=AdamParams)
    loss_kind: str = LOSS_PIXEL
    seed: int = 0

    def __post_init__(self):
        if self.target_space not in (SPACE_W, SPACE_WPLUS):
            raise ValueError(f"unknown target_space {self.target_space!r}")
        if self.prior_weight < 0:
            raise ValueError("prior_weight must be nonnegative")
        if self.loss_kind not in (LOSS_PIXEL, LOSS_PROXY):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    @property
    def resolved_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return _DEFAULT_LR[self.target_space]

    @property
    def resolved_iterations(self) -> int:
        if self.iterations is not None:
            return self.iterations
        return _DEFAULT_ITERATIONS[self.target_space]


@dataclass(frozen=True)
class InversionResult:
    latent: np.ndarray        # (d,) for W, (s, d) for W+
    loss_trace: np.ndarray    # reconstruction loss per iteration
    prior_trace: np.ndarray   # prior energy per iteration (zeros when weight 0)
    final_image_error: float  # reconstruction loss at the returned latent
    iterations_run: int


def reconstruction_loss(image_a, image_b, loss_kind: str):
    """Return (loss, gradient with respect to image_a).

    pixel-mse is the mean squared pixel difference. The proxy loss is the
    mean squared difference of fixed random-network features, a stand-in
    for a perceptual distance.
    """
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shape mismatch: {a.shape} vs {b.shape}")
    if loss_kind == LOSS_PIXEL:
        diff = a - b
        return float(np.mean(diff * diff)), 2.0 * diff / diff.size
    if loss_kind == LOSS_PROXY:
        net = features.proxy_net(a.size)
        fa = features.embed(net, a)
        fb = features.embed(net, b)
        df = fa - fb
        loss = float(np.mean(df * df))
        grad = features.embed_vjp(net, a, 2.0 * df / df.size)
        return loss, grad
    raise ValueError(f"unknown loss_kind {loss_kind!r}")


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int

    @classmethod
    def fresh(cls, shape) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape), 0)


def adam_step(state: AdamState, gradient, lr: float, beta1: float,
              beta2: float, eps: float):
    """One bias-corrected ADAM update. Returns (new state, parameter delta)."""
    g = np.asarray(gradient, dtype=np.float64)
    if g.shape != state.m.shape:
        raise ValueError(f"gradient shape {g.shape} != state shape {state.m.shape}")
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * g
    v = beta2 * state.v + (1 - beta2) * g * g
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    delta = -lr * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m, v, t), delta


def w_std_norm(model: GaussianModel) -> float:
    """Norm of the per-coordinate W std, estimated by sampling the model."""
    rng = rng_from(_W_STD_SEED, STREAM_W_STD)
    ws = v_to_w(sample_latents(model, rng, _W_STD_SAMPLES))
    return float(np.linalg.norm(ws.std(axis=0, ddof=1)))


def _as_stacks(latent: np.ndarray, wplus: bool, scales: int) -> np.ndarray:
    """Lift a latent to a batch of one (s, d) stack."""
    if wplus:
        return latent[None]
    return broadcast_style(latent, scales)[None]


def _eval_objective(target, bundle, model, config, latent):
    """Loss, prior energy, and total gradient at one latent (no noise)."""
    wplus = config.target_space == SPACE_WPLUS
    stacks = _as_stacks(latent, wplus, bundle.dims.scales)
    image = synthesize_batch(bundle, stacks)[0]
    loss, g_image = reconstruction_loss(image, target, config.loss_kind)
    g_stack = synthesize_vjp_batch(bundle, stacks, g_image[None])[0]
    grad = g_stack if wplus else g_stack.sum(axis=0)

    prior = 0.0
    if config.prior_weight > 0:
        rows = latent if wplus else latent[None]
        vs = w_to_v(rows)
        prior = float(np.sum(mahalanobis_sq_batch(model, vs)))
        g_prior = mahalanobis_sq_grad_batch(model, vs) * lru_deriv(rows, SLOPE_W_TO_V)
        grad = grad + config.prior_weight * (g_prior if wplus else g_prior[0])
    return loss, prior, grad


def objective_and_gradient(target_image, bundle: GeneratorBundle,
                           model: GaussianModel, config: InversionConfig,
                           latent):
    """Total objective loss + weight * prior and its gradient at ``latent``."""
    arr = _check_latent(bundle, config, np.asarray(latent, dtype=np.float64))
    loss, prior, grad = _eval_objective(
        np.asarray(target_image, dtype=np.float64), bundle, model, config, arr
    )
    return loss + config.prior_weight * prior, grad


def _check_latent(bundle, config, latent: np.ndarray) -> np.ndarray:
    d, s = bundle.dims.latent_dim, bundle.dims.scales
    want = (s, d) if config.target_space == SPACE_WPLUS else (d,)
    if latent.shape != want:
        raise ValueError(f"latent shape {latent.shape}, expected {want}")
    return latent


def invert(target_image, bundle: GeneratorBundle, model: GaussianModel,
           config: InversionConfig, init_latent=None) -> InversionResult:
    """Solve the inversion problem for one target image.

    ``init_latent`` overrides the default start at the empirical W mean
    (broadcast for W+); the override is what oracle-mode experiments use.
    """
    target = np.asarray(target_image, dtype=np.float64)
    if target.shape != (bundle.dims.pixels,):
        raise ValueError(
            f"target has shape {target.shape}, expected ({bundle.dims.pixels},)"
        )
    if model.dim != bundle.dims.latent_dim:
        raise ValueError(
            f"model dim {model.dim} != generator latent dim {bundle.dims.latent_dim}"
        )
    wplus = config.target_space == SPACE_WPLUS

    if init_latent is None:
        latent = (broadcast_style(model.mean_w, bundle.dims.scales)
                  if wplus else model.mean_w.copy())
    else:
        latent = _check_latent(bundle, config,
                               np.array(init_latent, dtype=np.float64))

    iterations = config.resolved_iterations
    lr = config.resolved_learning_rate
    ramp = config.noise_ramp
    noise_rng = rng_from(config.seed, STREAM_INVERT_NOISE)
    sigma0 = ramp.initial_std_factor * w_std_norm(model) \
        if ramp.initial_std_factor > 0 else 0.0

    state = AdamState.fresh(latent.shape)
    loss_trace = np.zeros(iterations)
    prior_trace = np.zeros(iterations)

    for t in range(iterations):
        decay = max(0.0, 1.0 - t / (ramp.ramp_fraction * iterations)) ** 2
        std_t = sigma0 * decay
        if std_t > 0:
            eval_latent = latent + std_t * noise_rng.standard_normal(latent.shape)
        else:
            eval_latent = latent
        loss, prior, grad = _eval_objective(target, bundle, model, config,
                                            eval_latent)
        if not np.isfinite(loss) or not np.isfinite(prior):
            raise NumericalFailure(
                f"inversion diverged at iteration {t} (loss={loss}, prior={prior})",
                iteration=t,
            )
        loss_trace[t] = loss
        prior_trace[t] = prior
        state, delta = adam_step(state, grad, lr, config.adam.beta1,
                                 config.adam.beta2, config.adam.eps)
        latent = latent + delta

    stacks = _as_stacks(latent, wplus, bundle.dims.scales)
    final_image = synthesize_batch(bundle, stacks)[0]
    final_error, _ = reconstruction_loss(final_image, target, config.loss_kind)
    return InversionResult(
        latent=latent,
        loss_trace=loss_trace,
        prior_trace=prior_trace,
        final_image_error=final_error,
        iterations_run=iterations,
    )


def result_to_json(result: InversionResult, config: InversionConfig) -> str:
    """Inversion result plus the full config, for provenance."""
    doc = {
        "config": asdict(config),
        "latent": np.asarray(result.latent).tolist(),
        "loss_trace": result.loss_trace.tolist(),
        "prior_trace": result.prior_trace.tolist(),
        "final_image_error": result.final_image_error,
        "iterations_run": result.iterations_run,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
