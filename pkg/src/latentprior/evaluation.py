"""Desk-scale experiment protocols.

Four experiments, all deterministic given a seed:

- interpolation_experiment: invert a pool of generated targets with and
  without the prior, then compare images synthesized along interpolations
  of the estimated latents against the ground-truth interpolations.
- lambda_sweep: the interpolation experiment repeated over prior weights.
- fid_tradeoff: match truncation and compression operating points by a
  Frechet feature distance, then compare identity preservation and
  per-pixel diversity at the matched points.
- pc_magnitude_profile: principal-component magnitude statistics of a
  latent batch, split into in-threshold and tail samples.

Experiments parallelize over independent tasks with per-task seeds, so
results do not depend on the worker count. Report aggregates (curves,
medians) are plain functions of the stored raw records.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import norm

from . import features
from .correction import compress_rows, compression_threshold, to_pc, truncate_rows
from .errors import NumericalFailure
from .features import FeatureNet, embed, init_feature_net
from .gaussian import GaussianModel, fit_gaussian, frechet_distance
from .generator import (
    GeneratorBundle,
    map_latents,
    sample_styles,
    sample_z,
    synthesize_batch,
)
from .inversion import (
    LOSS_PIXEL,
    LOSS_PROXY,
    SPACE_W,
    SPACE_WPLUS,
    InversionConfig,
    NoiseRamp,
    invert,
)
from .seeding import (
    STREAM_PAIRS,
    STREAM_TARGETS,
    STREAM_TASKS,
    STREAM_Z,
    child_seed,
    rng_from,
)
from .spaces import w_to_v

# Fixed seeds for the two stand-in feature networks: one plays the role of
# the distribution-distance features, one the role of the identity embedding.
FID_FEATURE_SEED = 202
IDENTITY_FEATURE_SEED = 303

DEFAULT_T_GRID = tuple(i / 10 for i in range(11))
DEFAULT_LAMBDA_GRID = (0.0, 1e-5, 1e-4, 1e-3)


def _pmap(fn, items, threads: int) -> list:
    """Ordered map, optionally over a thread pool. Results match input order."""
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def condition_label(space: str, prior_weight: float) -> str:
    return f"{space}:lambda={prior_weight:g}"


# --- interpolation experiment ----------------------------------------------


@dataclass(frozen=True)
class InterpolationConfig:
    """Protocol parameters for the interpolation-error experiment.

    One condition is run per (space, prior weight) combination. Within a
    space, every prior weight sees the same targets, the same pairs, and
    the same per-target noise seeds, so prior-on vs prior-off is a paired
    comparison. iterations / learning_rate of None fall back to the
    inversion defaults for the space; the experiment defaults run longer
    at a smaller step than a single-shot inversion because interpolation
    quality hinges on fully settled endpoints, and they still keep a full
    sweep in the minutes range at desk scale.
    """

    spaces: tuple[str, ...] = (SPACE_W, SPACE_WPLUS)
    prior_weights: tuple[float, ...] = (0.0, 1e-4)
    n_images: int = 20
    n_pairs: int = 40
    t_grid: tuple[float, ...] = DEFAULT_T_GRID
    iterations: int | None = 3000
    learning_rate: float | None = 0.02
    loss_kind: str = LOSS_PIXEL
    noise_ramp: NoiseRamp = field(default_factory=NoiseRamp)
    oracle_init: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.spaces:
            raise ValueError("at least one space is required")
        for sp in self.spaces:
            if sp not in (SPACE_W, SPACE_WPLUS):
                raise ValueError(f"unknown space {sp!r}")
        if not self.prior_weights:
            raise ValueError("at least one prior weight is required")
        if any(w < 0 for w in self.prior_weights):
            raise ValueError("prior weights must be nonnegative")
        if self.n_images < 2:
            raise ValueError("n_images must be >= 2")
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        if self.loss_kind not in (LOSS_PIXEL, LOSS_PROXY):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        grid = tuple(float(t) for t in self.t_grid)
        if any(t < 0 or t > 1 for t in grid):
            raise ValueError("t_grid values must lie in [0, 1]")
        for needed in (0.0, 0.5, 1.0):
            if needed not in grid:
                raise ValueError(f"t_grid must contain {needed}")
        object.__setattr__(self, "t_grid", grid)


@dataclass(frozen=True)
class ConditionRecord:
    """Raw per-sample results for one (space, prior weight) condition.

    Entries of targets that failed to invert carry zeros and are masked
    out by target_ok; pairs touching a failed target are masked by
    pair_ok and excluded from every aggregate.
    """

    space: str
    prior_weight: float
    target_ok: np.ndarray      # (n_images,) bool
    latent_errors: np.ndarray  # (n_images,) L2 error vs the true latent
    image_errors: np.ndarray   # (n_images,) final reconstruction error
    pair_indices: np.ndarray   # (n_pairs, 2) indices into the target pool
    pair_ok: np.ndarray        # (n_pairs,) bool
    pair_errors: np.ndarray    # (n_pairs, n_t) per-t interpolation error

    @property
    def n_failed_pairs(self) -> int:
        return int(np.sum(~self.pair_ok))


@dataclass(frozen=True)
class ExperimentReport:
    t_grid: tuple[float, ...]
    conditions: tuple[str, ...]
    records: dict[str, ConditionRecord]
    config: dict

    def record(self, condition: str) -> ConditionRecord:
        if condition not in self.records:
            raise ValueError(f"no condition {condition!r} in report")
        return self.records[condition]

    def curve(self, condition: str):
        """Per-t (mean, std) of the interpolation error over kept pairs."""
        rec = self.record(condition)
        kept = rec.pair_errors[rec.pair_ok]
        if kept.shape[0] == 0:
            n_t = len(self.t_grid)
            return np.zeros(n_t), np.zeros(n_t)
        mean = kept.mean(axis=0)
        std = kept.std(axis=0, ddof=1) if kept.shape[0] >= 2 else np.zeros_like(mean)
        return mean, std

    def error_at(self, condition: str, t: float) -> float:
        try:
            ti = self.t_grid.index(float(t))
        except ValueError:
            raise ValueError(f"t = {t} is not on the grid {self.t_grid}") from None
        return float(self.curve(condition)[0][ti])

    def midpoint_error(self, condition: str) -> float:
        return self.error_at(condition, 0.5)

    def endpoint_error(self, condition: str) -> float:
        return 0.5 * (self.error_at(condition, 0.0) + self.error_at(condition, 1.0))

    def median_latent_error(self, condition: str) -> float:
        rec = self.record(condition)
        return float(np.median(rec.latent_errors[rec.target_ok]))

    def mean_image_error(self, condition: str) -> float:
        rec = self.record(condition)
        return float(np.mean(rec.image_errors[rec.target_ok]))


def latent_error(estimate, truth) -> float:
    """Euclidean distance between two latents (full stack for W+)."""
    a = np.asarray(estimate, dtype=np.float64)
    b = np.asarray(truth, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm((a - b).ravel()))


def _batch_errors(images_a: np.ndarray, images_b: np.ndarray, loss_kind: str) -> np.ndarray:
    """Row-wise reconstruction_loss over two equally shaped image batches."""
    if loss_kind == LOSS_PIXEL:
        d = images_a - images_b
        return np.mean(d * d, axis=1)
    net = features.proxy_net(images_a.shape[1])
    d = embed(net, images_a) - embed(net, images_b)
    return np.mean(d * d, axis=1)


def _ground_truth(bundle: GeneratorBundle, config: InterpolationConfig,
                  space_idx: int, space: str):
    """Sample true latents and their images for one condition's target pool.

    W targets use a single style per image; W+ targets use per-scale
    distinct styles, matching the space being inverted.
    """
    s, d = bundle.dims.scales, bundle.dims.latent_dim
    rng = rng_from(config.seed, STREAM_TARGETS, space_idx)
    stacks = np.empty((config.n_images, s, d))
    for i in range(config.n_images):
        if space == SPACE_W:
            stacks[i] = map_latents(bundle, sample_z(rng, d)[None])[0]
        else:
            zs = np.stack([sample_z(rng, d) for _ in range(s)])
            stacks[i] = map_latents(bundle, zs)
    latents = stacks[:, 0, :].copy() if space == SPACE_W else stacks
    return latents, stacks, synthesize_batch(bundle, stacks)


def _invert_pool(bundle, model, config: InterpolationConfig, space: str,
                 weight: float, space_idx: int, targets: np.ndarray,
                 truth_latents: np.ndarray, threads: int):
    """Invert every target of a pool; failures are masked, not raised."""
    n = config.n_images
    inv_shape = ((bundle.dims.scales, bundle.dims.latent_dim)
                 if space == SPACE_WPLUS else (bundle.dims.latent_dim,))

    def task(i: int):
        cfg = InversionConfig(
            target_space=space,
            prior_weight=weight,
            learning_rate=config.learning_rate,
            iterations=config.iterations,
            noise_ramp=config.noise_ramp,
            loss_kind=config.loss_kind,
            seed=child_seed(config.seed, STREAM_TASKS, space_idx, i),
        )
        init = truth_latents[i] if config.oracle_init else None
        try:
            return invert(targets[i], bundle, model, cfg, init_latent=init)
        except NumericalFailure:
            return None

    results = _pmap(task, range(n), threads)
    est = np.zeros((n,) + inv_shape)
    ok = np.zeros(n, dtype=bool)
    lat_err = np.zeros(n)
    img_err = np.zeros(n)
    for i, res in enumerate(results):
        if res is None:
            continue
        ok[i] = True
        est[i] = res.latent
        lat_err[i] = latent_error(res.latent, truth_latents[i])
        img_err[i] = res.final_image_error
    return est, ok, lat_err, img_err


def interpolation_experiment(bundle: GeneratorBundle, model: GaussianModel,
                             config: InterpolationConfig,
                             n_pairs: int | None = None,
                             t_grid=None,
                             target_bundle: GeneratorBundle | None = None,
                             threads: int = 1) -> ExperimentReport:
    """Run the interpolation-error protocol for every configured condition.

    ``target_bundle``, when given, generates the targets instead of
    ``bundle`` (out-of-model targets); latent errors are then relative
    numbers against the target generator's latents. ``threads`` only sets
    the worker count; results are identical for any value.
    """
    overrides = {}
    if n_pairs is not None:
        overrides["n_pairs"] = n_pairs
    if t_grid is not None:
        overrides["t_grid"] = tuple(t_grid)
    if overrides:
        config = replace(config, **overrides)
    if model.dim != bundle.dims.latent_dim:
        raise ValueError(
            f"model dim {model.dim} != generator latent dim {bundle.dims.latent_dim}"
        )
    truth_gen = bundle if target_bundle is None else target_bundle
    if truth_gen.dims != bundle.dims:
        raise ValueError("target generator dims must match the inverted generator")

    records: dict[str, ConditionRecord] = {}
    conditions: list[str] = []
    n_t = len(config.t_grid)
    for space_idx, space in enumerate(config.spaces):
        truth_latents, truth_stacks, targets = _ground_truth(
            truth_gen, config, space_idx, space
        )
        pair_rng = rng_from(config.seed, STREAM_PAIRS, space_idx)
        pairs = np.empty((config.n_pairs, 2), dtype=np.int64)
        for p in range(config.n_pairs):
            pairs[p] = pair_rng.choice(config.n_images, size=2, replace=False)
        # Ground-truth interpolation images are shared by all prior weights.
        true_imgs = [
            synthesize_batch(truth_gen, (1 - t) * truth_stacks[pairs[:, 0]]
                             + t * truth_stacks[pairs[:, 1]])
            for t in config.t_grid
        ]
        for weight in config.prior_weights:
            est, ok, lat_err, img_err = _invert_pool(
                bundle, model, config, space, weight, space_idx,
                targets, truth_latents, threads,
            )
            est_stacks = (est if space == SPACE_WPLUS
                          else np.repeat(est[:, None, :], bundle.dims.scales, axis=1))
            pair_ok = ok[pairs[:, 0]] & ok[pairs[:, 1]]
            pair_errors = np.zeros((config.n_pairs, n_t))
            for ti, t in enumerate(config.t_grid):
                est_imgs = synthesize_batch(
                    bundle,
                    (1 - t) * est_stacks[pairs[:, 0]] + t * est_stacks[pairs[:, 1]],
                )
                pair_errors[:, ti] = _batch_errors(est_imgs, true_imgs[ti],
                                                   config.loss_kind)
            label = condition_label(space, weight)
            conditions.append(label)
            records[label] = ConditionRecord(
                space=space,
                prior_weight=float(weight),
                target_ok=ok,
                latent_errors=lat_err,
                image_errors=img_err,
                pair_indices=pairs,
                pair_ok=pair_ok,
                pair_errors=pair_errors,
            )
    return ExperimentReport(
        t_grid=config.t_grid,
        conditions=tuple(conditions),
        records=records,
        config=asdict(config),
    )


def lambda_sweep(bundle: GeneratorBundle, model: GaussianModel,
                 config: InterpolationConfig,
                 lambda_grid=DEFAULT_LAMBDA_GRID,
                 threads: int = 1) -> dict[float, ExperimentReport]:
    """One interpolation experiment per prior weight, identical seeds."""
    grid = tuple(float(lam) for lam in lambda_grid)
    if not grid:
        raise ValueError("lambda grid must be nonempty")
    if any(lam < 0 for lam in grid):
        raise ValueError("lambda grid values must be nonnegative")
    return {
        lam: interpolation_experiment(bundle, model,
                                      replace(config, prior_weights=(lam,)),
                                      threads=threads)
        for lam in grid
    }


# --- feature-space metrics --------------------------------------------------


def fid_proxy(images_a, images_b, feature_net: FeatureNet) -> float:
    """Frechet distance between Gaussian fits to the two sets' features."""
    a = np.asarray(images_a, dtype=np.float64)
    b = np.asarray(images_b, dtype=np.float64)
    for name, arr in (("images_a", a), ("images_b", b)):
        if arr.ndim != 2:
            raise ValueError(f"{name} must be a 2-D image batch, got {arr.shape}")
        if arr.shape[0] < 2:
            raise ValueError(f"{name} needs at least 2 images to fit a Gaussian")
    fa = embed(feature_net, a)
    fb = embed(feature_net, b)
    return frechet_distance(fit_gaussian(fa, fa), fit_gaussian(fb, fb))


def identity_similarity(image_a, image_b, feature_net: FeatureNet) -> float:
    """Cosine similarity of the two images' feature vectors; 0 on zero norm."""
    fa = embed(feature_net, np.asarray(image_a, dtype=np.float64))
    fb = embed(feature_net, np.asarray(image_b, dtype=np.float64))
    na = float(np.linalg.norm(fa))
    nb = float(np.linalg.norm(fb))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(float(fa @ fb) / (na * nb), -1.0, 1.0))


def _mean_cosine(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    na = np.linalg.norm(feats_a, axis=1)
    nb = np.linalg.norm(feats_b, axis=1)
    ok = (na > 0) & (nb > 0)
    cos = np.zeros(feats_a.shape[0])
    cos[ok] = np.sum(feats_a[ok] * feats_b[ok], axis=1) / (na[ok] * nb[ok])
    return float(np.mean(np.clip(cos, -1.0, 1.0)))


# --- principal-component magnitude profile ----------------------------------


@dataclass(frozen=True)
class ProfileGroup:
    count: int
    mean: np.ndarray  # (k,) mean |v^p_i|; zeros when the group is empty
    std: np.ndarray   # (k,) population std of |v^p_i|


@dataclass(frozen=True)
class MagnitudeProfile:
    k: int
    tau: float
    threshold: float
    n_samples: int
    flagged: ProfileGroup
    unflagged: ProfileGroup

    @property
    def flagged_fraction(self) -> float:
        return self.flagged.count / self.n_samples


def pc_magnitude_profile(latents_w, model: GaussianModel, k: int,
                         tau: float = 0.5) -> MagnitudeProfile:
    """Per-dimension |v^p| statistics of a W batch, split by tail flag.

    A sample is tail-flagged iff any of its principal-component
    coordinates exceeds tau * sigma_max in magnitude; statistics cover
    the first k dimensions of each group.
    """
    arr = np.asarray(latents_w, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != model.dim:
        raise ValueError(f"expected (n, {model.dim}) latents, got {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("at least one latent is required")
    if not 1 <= k <= model.dim:
        raise ValueError(f"k must be in [1, {model.dim}], got {k}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    vp = to_pc(model, w_to_v(arr))
    threshold = compression_threshold(model, tau)
    flags = np.max(np.abs(vp), axis=1) > threshold
    mags = np.abs(vp[:, :k])

    def group(mask: np.ndarray) -> ProfileGroup:
        sub = mags[mask]
        if sub.shape[0] == 0:
            return ProfileGroup(0, np.zeros(k), np.zeros(k))
        return ProfileGroup(sub.shape[0], sub.mean(axis=0), sub.std(axis=0))

    return MagnitudeProfile(
        k=k,
        tau=float(tau),
        threshold=threshold,
        n_samples=arr.shape[0],
        flagged=group(flags),
        unflagged=group(~flags),
    )


def tail_probability(model: GaussianModel, tau: float) -> float:
    """Analytic P(max_i |v^p_i| > tau * sigma_max) under the fitted Gaussian.

    PC coordinates are independent with variances eigvals, so the tail
    probability is 1 minus the product of the per-dimension interior
    probabilities 2 Phi(threshold / sqrt(eigval)) - 1.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    threshold = compression_threshold(model, tau)
    lam = np.maximum(model.eigvals, 0.0)
    inside = np.ones(model.dim)
    pos = lam > 0
    inside[pos] = 2.0 * norm.cdf(threshold / np.sqrt(lam[pos])) - 1.0
    return float(1.0 - np.prod(inside))


# --- truncation vs compression tradeoff --------------------------------------


@dataclass(frozen=True)
class TradeoffConfig:
    """Operating points and sample sizes for the matched-FID comparison."""

    psis: tuple[float, ...] = (0.85, 0.7, 0.55)
    n_samples: int = 2048
    n_identity: int = 512
    tau_lo: float = 0.05
    tau_hi: float = 8.0
    match_tol: float = 0.05
    max_bisect: int = 40
    seed: int = 0

    def __post_init__(self):
        if not self.psis:
            raise ValueError("at least one psi is required")
        if any(not 0 <= p <= 1 for p in self.psis):
            raise ValueError("psi values must lie in [0, 1]")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if not 1 <= self.n_identity <= self.n_samples:
            raise ValueError("n_identity must be in [1, n_samples]")
        if not 0 < self.tau_lo < self.tau_hi:
            raise ValueError("need 0 < tau_lo < tau_hi")
        if not 0 < self.match_tol < 1:
            raise ValueError("match_tol must be in (0, 1)")
        if self.max_bisect < 1:
            raise ValueError("max_bisect must be >= 1")


@dataclass(frozen=True)
class OperatingPoint:
    psi: float
    tau: float                 # bisected compression threshold factor
    fid_truncation: float      # matching target
    fid_compression: float     # achieved at tau
    matched: bool              # within match_tol of the target
    identity_truncation: float
    identity_compression: float
    pixel_std_truncation: float
    pixel_std_compression: float


@dataclass(frozen=True)
class TradeoffReport:
    fid_uncorrected: float
    pixel_std_uncorrected: float
    points: tuple[OperatingPoint, ...]
    config: dict


def _style_images(bundle: GeneratorBundle, ws: np.ndarray) -> np.ndarray:
    stacks = np.repeat(ws[:, None, :], bundle.dims.scales, axis=1)
    return synthesize_batch(bundle, stacks)


def _pixel_std(images: np.ndarray) -> float:
    return float(images.std(axis=0).mean())


def fid_tradeoff(bundle: GeneratorBundle, model: GaussianModel,
                 config: TradeoffConfig, threads: int = 1) -> TradeoffReport:
    """Compare correction methods at FID-matched operating points.

    For each psi, the truncated batch's feature distance to a disjoint
    reference batch is the matching target; tau is bisected (the distance
    is decreasing in tau) until the compressed batch matches within
    match_tol. Identity similarity is measured per sample against the
    uncorrected image; diversity is the mean per-pixel std of the batch.
    """
    if model.dim != bundle.dims.latent_dim:
        raise ValueError(
            f"model dim {model.dim} != generator latent dim {bundle.dims.latent_dim}"
        )
    pixels = bundle.dims.pixels
    fid_net = init_feature_net(FID_FEATURE_SEED, pixels)
    id_net = init_feature_net(IDENTITY_FEATURE_SEED, pixels)

    ws = sample_styles(bundle, rng_from(config.seed, STREAM_Z, 0), config.n_samples)
    ref_ws = sample_styles(bundle, rng_from(config.seed, STREAM_Z, 1),
                           config.n_samples)
    images = _style_images(bundle, ws)
    ref_feats = embed(fid_net, _style_images(bundle, ref_ws))
    ref_gauss = fit_gaussian(ref_feats, ref_feats)

    def fid_of(imgs: np.ndarray) -> float:
        f = embed(fid_net, imgs)
        return frechet_distance(ref_gauss, fit_gaussian(f, f))

    id_feats_raw = embed(id_net, images[:config.n_identity])

    def point(psi: float) -> OperatingPoint:
        trunc_imgs = _style_images(bundle, truncate_rows(model, ws, psi))
        fid_t = fid_of(trunc_imgs)
        lo, hi = config.tau_lo, config.tau_hi
        tau = 0.5 * (lo + hi)
        comp_imgs = images
        fid_c = np.inf
        matched = False
        for _ in range(config.max_bisect):
            tau = 0.5 * (lo + hi)
            comp_imgs = _style_images(bundle, compress_rows(model, ws, tau))
            fid_c = fid_of(comp_imgs)
            if abs(fid_c - fid_t) <= config.match_tol * fid_t:
                matched = True
                break
            if fid_c > fid_t:
                lo = tau  # over-squashed: raise the threshold
            else:
                hi = tau
        n_id = config.n_identity
        return OperatingPoint(
            psi=float(psi),
            tau=float(tau),
            fid_truncation=fid_t,
            fid_compression=float(fid_c),
            matched=matched,
            identity_truncation=_mean_cosine(
                id_feats_raw, embed(id_net, trunc_imgs[:n_id])),
            identity_compression=_mean_cosine(
                id_feats_raw, embed(id_net, comp_imgs[:n_id])),
            pixel_std_truncation=_pixel_std(trunc_imgs),
            pixel_std_compression=_pixel_std(comp_imgs),
        )

    points = tuple(_pmap(point, config.psis, threads))
    return TradeoffReport(
        fid_uncorrected=fid_of(images),
        pixel_std_uncorrected=_pixel_std(images),
        points=points,
        config=asdict(config),
    )


# --- report serialization ----------------------------------------------------


def report_to_json(report: ExperimentReport) -> str:
    doc = {
        "kind": "interpolation",
        "config": report.config,
        "t_grid": list(report.t_grid),
        "conditions": list(report.conditions),
        "curves": {},
        "summary": {},
        "records": {},
    }
    for c in report.conditions:
        rec = report.record(c)
        mean, std = report.curve(c)
        doc["curves"][c] = {"mean": mean.tolist(), "std": std.tolist()}
        doc["summary"][c] = {
            "median_latent_error": report.median_latent_error(c),
            "mean_image_error": report.mean_image_error(c),
            "endpoint_error": report.endpoint_error(c),
            "midpoint_error": report.midpoint_error(c),
            "failed_pairs": rec.n_failed_pairs,
        }
        doc["records"][c] = {
            "space": rec.space,
            "prior_weight": rec.prior_weight,
            "target_ok": rec.target_ok.tolist(),
            "latent_errors": rec.latent_errors.tolist(),
            "image_errors": rec.image_errors.tolist(),
            "pair_indices": rec.pair_indices.tolist(),
            "pair_ok": rec.pair_ok.tolist(),
            "pair_errors": rec.pair_errors.tolist(),
        }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def curve_csv(report: ExperimentReport, condition: str) -> str:
    """One curve as CSV: t, mean_error, std_error, condition."""
    mean, std = report.curve(condition)
    lines = ["t,mean_error,std_error,condition"]
    for t, m, s in zip(report.t_grid, mean, std):
        lines.append(f"{t:g},{float(m)!r},{float(s)!r},{condition}")
    return "\n".join(lines) + "\n"


def condition_filename(condition: str) -> str:
    return "curve_" + condition.replace(":", "_").replace("=", "-") + ".csv"


def profile_to_json(profile: MagnitudeProfile) -> str:
    def group(g: ProfileGroup) -> dict:
        return {"count": g.count, "mean": g.mean.tolist(), "std": g.std.tolist()}

    doc = {
        "kind": "pc-profile",
        "k": profile.k,
        "tau": profile.tau,
        "threshold": profile.threshold,
        "n_samples": profile.n_samples,
        "flagged_fraction": profile.flagged_fraction,
        "flagged": group(profile.flagged),
        "unflagged": group(profile.unflagged),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def tradeoff_to_json(report: TradeoffReport) -> str:
    doc = {
        "kind": "fid-tradeoff",
        "config": report.config,
        "fid_uncorrected": report.fid_uncorrected,
        "pixel_std_uncorrected": report.pixel_std_uncorrected,
        "points": [asdict(p) for p in report.points],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
