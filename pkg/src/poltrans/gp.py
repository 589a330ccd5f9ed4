"""Exact Gaussian Process regression with a squared-exponential kernel.

Supports multi-output models that share a single set of hyperparameters
(one Gram factorization serves every output dimension), marginal-likelihood
hyperparameter optimization in log-space, and the joint posterior over
function values and first derivatives:

    mean      mu  = K(X*,X) (K(X,X) + sn2 I)^-1 y
    variance  Sig = K(X*,X*) - K(X*,X) (K(X,X) + sn2 I)^-1 K(X,X*)
    d-mean    mu' = K10(X*,X) (K(X,X) + sn2 I)^-1 y
    d-var     Sig'= K11(X*,X*) - K10(X*,X) (K(X,X) + sn2 I)^-1 K01(X,X*)

For the SE kernel k(u, v) = sp2 exp(-|u - v|^2 / (2 l^2)) the cross
covariances are analytic:

    dk/du_b          = -(u_b - v_b) / l^2 * k(u, v)
    d2k/du_b dv_c    = (delta_bc / l^2 - (u_b - v_b)(u_c - v_c) / l^4) * k

so K11 at u = v is (sp2 / l^2) I, which is the prior derivative variance
far from all data. The prior mean is fixed at zero: far from the training
inputs the posterior mean decays to 0 and the variance reverts to sp2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.optimize import minimize
from scipy.spatial.distance import cdist, pdist

# Likelihood noise is kept at or above this fraction of the signal variance.
NOISE_FLOOR_RATIO = 1e-8
# Jitter escalates by x10 from the floor up to this fraction on Cholesky failure.
JITTER_MAX_RATIO = 1e-4


@dataclass(frozen=True)
class KernelParams:
    """SE kernel hyperparameters. ``noise_variance`` is clamped up to the
    structural floor ``NOISE_FLOOR_RATIO * signal_variance`` on construction."""

    signal_variance: float
    lengthscale: float
    noise_variance: float = 0.0

    def __post_init__(self):
        if not (
            np.isfinite(self.signal_variance)
            and np.isfinite(self.lengthscale)
            and np.isfinite(self.noise_variance)
        ):
            raise ValueError("kernel parameters must be finite")
        if self.signal_variance <= 0 or self.lengthscale <= 0:
            raise ValueError("signal variance and lengthscale must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be nonnegative")
        floor = NOISE_FLOOR_RATIO * self.signal_variance
        if self.noise_variance < floor:
            object.__setattr__(self, "noise_variance", floor)

    def to_dict(self) -> dict:
        return {
            "signal_variance": self.signal_variance,
            "lengthscale": self.lengthscale,
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KernelParams":
        return cls(
            signal_variance=float(data["signal_variance"]),
            lengthscale=float(data["lengthscale"]),
            noise_variance=float(data["noise_variance"]),
        )


def kernel_se(xi, xj, params: KernelParams) -> float:
    """sp2 * exp(-|xi - xj|^2 / (2 l^2)) for a single pair of points."""
    a = np.asarray(xi, dtype=float).ravel()
    b = np.asarray(xj, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError("kernel inputs must have equal length")
    sq = float(np.sum((a - b) ** 2))
    return params.signal_variance * float(np.exp(-sq / (2.0 * params.lengthscale**2)))


def _se_matrix(a: np.ndarray, b: np.ndarray, params: KernelParams) -> np.ndarray:
    sq = cdist(a, b, "sqeuclidean")
    return params.signal_variance * np.exp(-sq / (2.0 * params.lengthscale**2))


@dataclass(frozen=True, eq=False)
class GPModel:
    """Fitted GP: training data, shared hyperparameters, and the cached
    Cholesky factorization products that make prediction O(N) per query."""

    inputs: np.ndarray
    outputs: np.ndarray
    params: KernelParams
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d_in(self) -> int:
        return self.inputs.shape[1]

    @property
    def d_out(self) -> int:
        return self.outputs.shape[1]

    def to_dict(self) -> dict:
        return {
            "inputs": self.inputs.tolist(),
            "outputs": self.outputs.tolist(),
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GPModel":
        return build_gp(
            np.asarray(data["inputs"], dtype=float),
            np.asarray(data["outputs"], dtype=float),
            KernelParams.from_dict(data["params"]),
        )


def _as_2d(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    if out.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array")
    return out


def build_gp(inputs, outputs, params: KernelParams) -> GPModel:
    """Factorize the Gram matrix and cache the solve against the outputs.

    On Cholesky failure the diagonal jitter escalates by factors of 10 from
    the noise floor up to ``JITTER_MAX_RATIO * signal_variance``; if every
    attempt fails a RuntimeError("non-PD Gram matrix") is raised.
    """
    x = _as_2d(inputs, "inputs")
    y = _as_2d(outputs, "outputs")
    if x.shape[0] != y.shape[0]:
        raise ValueError("inputs and outputs must have the same length")
    if x.shape[0] < 1:
        raise ValueError("at least one training point required")

    gram = _se_matrix(x, x, params)
    base = gram + params.noise_variance * np.eye(x.shape[0])

    jitter = 0.0
    next_jitter = NOISE_FLOOR_RATIO * params.signal_variance
    while True:
        try:
            chol = cholesky(base + jitter * np.eye(x.shape[0]), lower=True)
            break
        except np.linalg.LinAlgError:
            if jitter >= JITTER_MAX_RATIO * params.signal_variance:
                raise RuntimeError("non-PD Gram matrix") from None
            jitter = next_jitter
            next_jitter *= 10.0

    alpha = cho_solve((chol, True), y)
    x = x.copy()
    y = y.copy()
    x.setflags(write=False)
    y.setflags(write=False)
    return GPModel(inputs=x, outputs=y, params=params, chol=chol, alpha=alpha, jitter=jitter)


def log_marginal_likelihood(model: GPModel) -> float:
    """Log marginal likelihood summed over output dimensions (shared params)."""
    n, d_out = model.n, model.d_out
    data_fit = -0.5 * float(np.sum(model.outputs * model.alpha))
    log_det = float(np.sum(np.log(np.diag(model.chol))))
    return data_fit - d_out * log_det - 0.5 * n * d_out * np.log(2.0 * np.pi)


def _nlml_and_grad(u: np.ndarray, sq_dists: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Negative LML and gradient in coordinates
    u = (log sp2, log l, log(sn2 / sp2))."""
    n, d_out = y.shape
    sp2, ell, ratio = np.exp(u[0]), np.exp(u[1]), np.exp(u[2])
    corr = np.exp(-sq_dists / (2.0 * ell**2))
    gram = sp2 * (corr + ratio * np.eye(n))
    try:
        chol = cholesky(gram, lower=True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros(3)
    alpha = cho_solve((chol, True), y)
    nlml = (
        0.5 * float(np.sum(y * alpha))
        + d_out * float(np.sum(np.log(np.diag(chol))))
        + 0.5 * n * d_out * np.log(2.0 * np.pi)
    )

    w = cho_solve((chol, True), np.eye(n))
    # dK/d(log sp2) = K itself; dK/d(log l) = sp2 corr * sq/l^2;
    # dK/d(log ratio) = sp2 ratio I.
    grads = np.empty(3)
    d_ell = sp2 * corr * (sq_dists / ell**2)
    for j, dk in enumerate((gram, d_ell, sp2 * ratio * np.eye(n))):
        quad = float(np.sum((dk @ alpha) * alpha))
        trace = float(np.sum(w * dk))
        grads[j] = -(0.5 * quad - 0.5 * d_out * trace)
    return nlml, grads


def fit_gp(
    inputs,
    outputs,
    init: KernelParams | None = None,
    optimize: bool = True,
    restarts: int = 5,
    noise_ratio_bounds: tuple[float, float] = (NOISE_FLOOR_RATIO, 1e2),
    seed: int = 0,
) -> GPModel:
    """Fit a (multi-output, shared-hyperparameter) GP to the data.

    With ``optimize`` the hyperparameters maximize the log marginal
    likelihood via L-BFGS-B in log-space, started from ``init`` plus
    ``restarts - 1`` seeded random draws. Search bounds follow the data:
    lengthscale in [1e-3, 1e3] x (input diameter / sqrt(d_in)), signal
    variance in [1e-6, 1e6] x output variance, noise-to-signal ratio in
    ``noise_ratio_bounds``. Without ``optimize`` the init is used as-is.
    """
    x = _as_2d(inputs, "inputs")
    y = _as_2d(outputs, "outputs")
    if x.shape[0] != y.shape[0]:
        raise ValueError("inputs and outputs must have the same length")

    diam = float(pdist(x).max()) if x.shape[0] > 1 else 0.0
    if diam <= 0.0:
        diam = 1.0
    ell_center = diam / np.sqrt(x.shape[1])

    out_var = float(np.mean(np.var(y, axis=0)))
    out_scale = float(np.mean(y**2))
    base = out_var if out_var > 0 else out_scale

    if base <= 0.0:
        # All-zero outputs: any hyperparameters give the zero posterior mean;
        # keep the prior variance negligible so predictions stay certain.
        tiny = KernelParams(
            signal_variance=1e-16 * max(diam, 1.0) ** 2,
            lengthscale=ell_center,
            noise_variance=0.0,
        )
        return build_gp(x, y, init if init is not None and not optimize else tiny)

    if init is None:
        init = KernelParams(
            signal_variance=base,
            lengthscale=ell_center,
            noise_variance=max(noise_ratio_bounds[0], min(noise_ratio_bounds[1], 1e-6))
            * base,
        )
    if not optimize:
        return build_gp(x, y, init)

    lo_ratio, hi_ratio = noise_ratio_bounds
    if hi_ratio < lo_ratio:
        raise ValueError("invalid noise ratio bounds")
    bounds = [
        (np.log(1e-6 * base), np.log(1e6 * base)),
        (np.log(1e-3 * ell_center), np.log(1e3 * ell_center)),
        (np.log(max(lo_ratio, NOISE_FLOOR_RATIO)), np.log(max(hi_ratio, NOISE_FLOOR_RATIO))),
    ]

    def clip_to(value, bound):
        return float(np.clip(value, bound[0], bound[1]))

    init_ratio = init.noise_variance / init.signal_variance
    start = np.array(
        [
            clip_to(np.log(init.signal_variance), bounds[0]),
            clip_to(np.log(init.lengthscale), bounds[1]),
            clip_to(np.log(max(init_ratio, NOISE_FLOOR_RATIO)), bounds[2]),
        ]
    )

    rng = np.random.default_rng(seed)
    starts = [start]
    for _ in range(max(0, restarts - 1)):
        draw = np.array(
            [
                clip_to(np.log(base) + rng.uniform(-2.3, 2.3), bounds[0]),
                clip_to(np.log(ell_center) + rng.uniform(-3.0, 3.0), bounds[1]),
                clip_to(
                    rng.uniform(np.log(max(lo_ratio, NOISE_FLOOR_RATIO)), bounds[2][1]),
                    bounds[2],
                ),
            ]
        )
        starts.append(draw)

    sq = cdist(x, x, "sqeuclidean")
    best_u, best_val = start, np.inf
    for u0 in starts:
        res = minimize(
            _nlml_and_grad,
            u0,
            args=(sq, y),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
        )
        if res.fun < best_val:
            best_val, best_u = float(res.fun), res.x
    if not np.isfinite(best_val):
        warnings.warn("hyperparameter optimization failed; using initial parameters")
        return build_gp(x, y, init)

    sp2 = float(np.exp(best_u[0]))
    params = KernelParams(
        signal_variance=sp2,
        lengthscale=float(np.exp(best_u[1])),
        noise_variance=float(np.exp(best_u[2])) * sp2,
    )
    return build_gp(x, y, params)


def _as_queries(model: GPModel, queries) -> tuple[np.ndarray, bool]:
    q = np.asarray(queries, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    if q.shape[1] != model.d_in:
        raise ValueError(f"queries must have dimension {model.d_in}")
    return q, single


def predict_mean(model: GPModel, queries) -> np.ndarray:
    """Posterior mean at the queries, shape (n, d_out) (or (d_out,) for a
    single query)."""
    q, single = _as_queries(model, queries)
    k_star = _se_matrix(q, model.inputs, model.params)
    mean = k_star @ model.alpha
    return mean[0] if single else mean


def predict_variance(model: GPModel, queries) -> np.ndarray:
    """Posterior (latent-function) variance at the queries, shared across
    output dimensions; clamped at >= 0. Shape (n,) or scalar."""
    q, single = _as_queries(model, queries)
    k_star = _se_matrix(q, model.inputs, model.params)
    v = cho_solve((model.chol, True), k_star.T)
    var = model.params.signal_variance - np.einsum("nq,nq->q", k_star.T, v)
    var = np.maximum(var, 0.0)
    return float(var[0]) if single else var


def predict_derivative(model: GPModel, queries) -> tuple[np.ndarray, np.ndarray]:
    """Posterior over the GP derivative at the queries.

    Returns ``(jacobians, variances)`` where ``jacobians[q]`` is the
    (d_out, d_in) mean derivative and ``variances[q]`` the (d_in, d_in)
    covariance of the derivative (shared across output dimensions), with
    its diagonal clamped at >= 0. For a single query the leading axis is
    dropped.
    """
    q, single = _as_queries(model, queries)
    ell2 = model.params.lengthscale**2
    k_star = _se_matrix(q, model.inputs, model.params)
    diff = q[:, None, :] - model.inputs[None, :, :]
    grad_k = -(diff / ell2) * k_star[:, :, None]  # (n, N, d_in)

    jac = np.einsum("qnb,na->qab", grad_k, model.alpha)

    n_q, n_train, d_in = grad_k.shape
    flat = grad_k.transpose(1, 0, 2).reshape(n_train, n_q * d_in)
    solved = cho_solve((model.chol, True), flat).reshape(n_train, n_q, d_in)
    explained = np.einsum("qnb,nqc->qbc", grad_k, solved)

    prior = (model.params.signal_variance / ell2) * np.eye(d_in)
    var = prior[None, :, :] - explained
    idx = np.arange(d_in)
    var[:, idx, idx] = np.maximum(var[:, idx, idx], 0.0)

    if single:
        return jac[0], var[0]
    return jac, var
