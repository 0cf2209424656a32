"""Gaussian model of the corrected latent distribution.

The distribution of latents in the corrected space V is modeled as a single
multivariate Gaussian with empirical mean and covariance. The model also
keeps the eigendecomposition of the covariance (for principal-component
work), a Cholesky factor of the regularized covariance (for energies and
sampling), and the empirical W-space mean (truncation blends toward it).

All solves go through the Cholesky factor; the covariance is never
explicitly inverted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputFormatError
from .seeding import STREAM_SAMPLES, rng_from

# Relative regularization added to the covariance diagonal before the
# Cholesky factorization: eps = EPS_SCALE * trace(cov) / dim.
EPS_SCALE = 1e-6
# Absolute floor so zero-variance data still yields a usable factor.
EPS_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianModel:
    """Fitted Gaussian over V-space latents.

    Attributes:
        dim: latent dimensionality d.
        mean_v: (d,) empirical mean in V.
        cov_v: (d, d) empirical covariance in V (unbiased, symmetric PSD).
        eigvecs: (d, d) orthonormal eigenvectors of cov_v, columns sorted by
            descending eigenvalue, sign-fixed so each column's
            largest-magnitude entry is positive.
        eigvals: (d,) eigenvalues, descending, clamped to >= 0.
        chol: (d, d) lower Cholesky factor of cov_v + epsilon * I.
        mean_w: (d,) empirical mean of the same samples in W.
        sample_count: number of samples used for the fit.
        epsilon: diagonal regularization used for chol.
    """

    dim: int
    mean_v: np.ndarray
    cov_v: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray
    chol: np.ndarray
    mean_w: np.ndarray
    sample_count: int
    epsilon: float

    @property
    def sigma_max(self) -> float:
        """Largest per-component standard deviation, sqrt of eigvals[0]."""
        return float(np.sqrt(self.eigvals[0]))


def _as_sample_matrix(samples, name: str) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def fit_gaussian(samples_v, samples_w) -> GaussianModel:
    """Fit mean/covariance in V plus the empirical W mean.

    Rows of ``samples_v`` and ``samples_w`` must correspond: row i of
    ``samples_v`` is the V-map of row i of ``samples_w``. The covariance uses
    the unbiased (n-1) denominator.
    """
    sv = _as_sample_matrix(samples_v, "samples_v")
    sw = _as_sample_matrix(samples_w, "samples_w")
    if sv.shape != sw.shape:
        raise ValueError(
            f"samples_v shape {sv.shape} != samples_w shape {sw.shape}"
        )
    n, d = sv.shape
    if n < 2:
        raise ValueError(f"need at least 2 samples to fit, got {n}")

    mean_v = sv.mean(axis=0)
    mean_w = sw.mean(axis=0)
    centered = sv - mean_v
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2.0

    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    # Deterministic sign: largest-magnitude entry of each column positive.
    for j in range(d):
        k = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]

    eps = max(EPS_SCALE * float(np.trace(cov)) / d, EPS_FLOOR)
    chol = np.linalg.cholesky(cov + eps * np.eye(d))

    return GaussianModel(
        dim=d,
        mean_v=mean_v,
        cov_v=cov,
        eigvecs=vecs,
        eigvals=vals,
        chol=chol,
        mean_w=mean_w,
        sample_count=n,
        epsilon=eps,
    )


def _check_vector(model: GaussianModel, v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape != (model.dim,):
        raise ValueError(f"expected shape ({model.dim},), got {arr.shape}")
    return arr


def mahalanobis_sq(model: GaussianModel, v) -> float:
    """Energy (v - mu)^T (cov + eps I)^{-1} (v - mu), via triangular solves."""
    arr = _check_vector(model, v)
    y = solve_triangular(model.chol, arr - model.mean_v, lower=True)
    return float(y @ y)


def mahalanobis_sq_batch(model: GaussianModel, vs) -> np.ndarray:
    """Row-wise mahalanobis_sq for an (n, d) array. Returns (n,)."""
    arr = np.asarray(vs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != model.dim:
        raise ValueError(f"expected shape (n, {model.dim}), got {arr.shape}")
    y = solve_triangular(model.chol, (arr - model.mean_v).T, lower=True)
    return np.einsum("ij,ij->j", y, y)


def mahalanobis_sq_grad(model: GaussianModel, v) -> np.ndarray:
    """Gradient 2 (cov + eps I)^{-1} (v - mu) of mahalanobis_sq."""
    arr = _check_vector(model, v)
    y = solve_triangular(model.chol, arr - model.mean_v, lower=True)
    return 2.0 * solve_triangular(model.chol.T, y, lower=False)


def mahalanobis_sq_grad_batch(model: GaussianModel, vs) -> np.ndarray:
    """Row-wise mahalanobis_sq_grad for an (n, d) array. Returns (n, d)."""
    arr = np.asarray(vs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != model.dim:
        raise ValueError(f"expected shape (n, {model.dim}), got {arr.shape}")
    y = solve_triangular(model.chol, (arr - model.mean_v).T, lower=True)
    return 2.0 * solve_triangular(model.chol.T, y, lower=False).T


def sample_latents(model: GaussianModel, seed, n: int) -> np.ndarray:
    """Draw n rows mu + chol @ xi with xi standard normal.

    ``seed`` is an integer (expanded through the package's stream splitting)
    or an existing numpy Generator.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        rng = rng_from(seed, STREAM_SAMPLES)
    xi = rng.standard_normal((n, model.dim))
    return model.mean_v + xi @ model.chol.T


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clamped to zero."""
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(m1: GaussianModel, m2: GaussianModel) -> float:
    """Frechet (Wasserstein-2) distance between the two Gaussian fits.

    ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}).
    """
    if m1.dim != m2.dim:
        raise ValueError(f"dimension mismatch: {m1.dim} vs {m2.dim}")
    # a metric is exactly zero on identical arguments; the trace formula
    # only gets there up to rounding, so short-circuit the exact case
    if np.array_equal(m1.mean_v, m2.mean_v) and np.array_equal(m1.cov_v, m2.cov_v):
        return 0.0
    diff = m1.mean_v - m2.mean_v
    s1_half = _psd_sqrt(m1.cov_v)
    cross = _psd_sqrt(s1_half @ m2.cov_v @ s1_half)
    val = float(
        diff @ diff
        + np.trace(m1.cov_v)
        + np.trace(m2.cov_v)
        - 2.0 * np.trace(cross)
    )
    return max(val, 0.0)


def validate_model(model: GaussianModel) -> None:
    """Raise ValueError if the model violates its structural invariants."""
    d = model.dim
    e, lam = model.eigvecs, model.eigvals
    recon = (e * lam) @ e.T
    if np.max(np.abs(recon - model.cov_v)) > 1e-8:
        raise ValueError("eigendecomposition does not reconstruct cov_v")
    if np.max(np.abs(e.T @ e - np.eye(d))) > 1e-10:
        raise ValueError("eigenvectors are not orthonormal")
    target = model.cov_v + model.epsilon * np.eye(d)
    if np.max(np.abs(model.chol @ model.chol.T - target)) > 1e-8:
        raise ValueError("chol does not factor cov_v + eps I")
    if np.any(np.diff(lam) > 0) or np.any(lam < 0):
        raise ValueError("eigvals must be nonnegative and non-increasing")


# --- serialization ---------------------------------------------------------
#
# One JSON document per model. Floats carry 17 significant digits so a
# reload restores the exact 64-bit values. Matrices are flat row-major.

_MODEL_KEYS = (
    "dim", "sample_count", "mean_v", "mean_w", "cov_v",
    "eigvals", "eigvecs", "epsilon",
)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fmt_array(a: np.ndarray) -> str:
    return "[" + ", ".join(_fmt(x) for x in np.asarray(a).ravel()) + "]"


def model_to_json(model: GaussianModel) -> str:
    parts = [
        f'"dim": {model.dim}',
        f'"sample_count": {model.sample_count}',
        f'"mean_v": {_fmt_array(model.mean_v)}',
        f'"mean_w": {_fmt_array(model.mean_w)}',
        f'"cov_v": {_fmt_array(model.cov_v)}',
        f'"eigvals": {_fmt_array(model.eigvals)}',
        f'"eigvecs": {_fmt_array(model.eigvecs)}',
        f'"epsilon": {_fmt(model.epsilon)}',
    ]
    return "{\n  " + ",\n  ".join(parts) + "\n}\n"


def model_from_json(text: str) -> GaussianModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"invalid model JSON: {exc}") from exc
    missing = [k for k in _MODEL_KEYS if k not in doc]
    if missing:
        raise InputFormatError(f"model JSON missing keys: {missing}")
    d = int(doc["dim"])
    try:
        mean_v = np.array(doc["mean_v"], dtype=np.float64).reshape(d)
        mean_w = np.array(doc["mean_w"], dtype=np.float64).reshape(d)
        cov_v = np.array(doc["cov_v"], dtype=np.float64).reshape(d, d)
        eigvals = np.array(doc["eigvals"], dtype=np.float64).reshape(d)
        eigvecs = np.array(doc["eigvecs"], dtype=np.float64).reshape(d, d)
    except (ValueError, TypeError) as exc:
        raise InputFormatError(f"malformed model arrays: {exc}") from exc
    eps = float(doc["epsilon"])
    chol = np.linalg.cholesky(cov_v + eps * np.eye(d))
    return GaussianModel(
        dim=d,
        mean_v=mean_v,
        cov_v=cov_v,
        eigvecs=eigvecs,
        eigvals=eigvals,
        chol=chol,
        mean_w=mean_w,
        sample_count=int(doc["sample_count"]),
        epsilon=eps,
    )


def save_model(model: GaussianModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_json(model))


def load_model(path) -> GaussianModel:
    with open(path) as fh:
        return model_from_json(fh.read())
