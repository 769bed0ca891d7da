"""Closed-form objectives for the linear-Gaussian generator.

Everything here is deterministic: expectations over time use a fixed grid,
expectations over cameras and noise are done analytically. These values are
the ground truth that the stochastic update rules are checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._gauss import LOG_2PI


@dataclass(frozen=True)
class GaussianMoments:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValueError(f"covariance shape {cov.shape} does not match mean {mean.shape}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise ValueError("covariance is not symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ValueError("covariance has a negative eigenvalue")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self):
        return self.mean.shape[0]


@dataclass(frozen=True)
class MixtureMoments:
    """Finite Gaussian mixture; component ``i`` is ``N(means[i], covariances[i])``."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray


def _logdet_pd(cov, what):
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not np.isfinite(logdet) or np.linalg.eigvalsh(cov).min() <= 0:
        raise ValueError(f"{what} covariance is singular")
    return logdet


def kl_gaussian(q: GaussianMoments, p: GaussianMoments) -> float:
    """KL(q || p) between two Gaussians."""
    if q.dim != p.dim:
        raise ValueError(f"dimension mismatch: {q.dim} vs {p.dim}")
    logdet_p = _logdet_pd(p.covariance, "p")
    logdet_q = _logdet_pd(q.covariance, "q")
    p_inv = np.linalg.inv(p.covariance)
    diff = p.mean - q.mean
    return 0.5 * float(np.trace(p_inv @ q.covariance) + diff @ p_inv @ diff - q.dim + logdet_p - logdet_q)


def entropy_gaussian(q: GaussianMoments) -> float:
    return 0.5 * q.dim * (1.0 + LOG_2PI) + 0.5 * _logdet_pd(q.covariance, "entropy")


def cross_entropy_gaussian(q: GaussianMoments, p: GaussianMoments) -> float:
    """``-E_{x~q} log p(x)``."""
    logdet_p = _logdet_pd(p.covariance, "p")
    p_inv = np.linalg.inv(p.covariance)
    diff = q.mean - p.mean
    return 0.5 * float(q.dim * LOG_2PI + logdet_p + np.trace(p_inv @ q.covariance) + diff @ p_inv @ diff)


def _require_closed_form(generator, target):
    if getattr(generator, "kind", None) != "linear" or getattr(target, "kind", None) != "gaussian":
        raise ValueError("closed-form objectives need a linear generator and a Gaussian target")
    if generator.dim != target.dim:
        raise ValueError(f"generator renders dimension {generator.dim}, target has {target.dim}")


def _times(schedule, t_samples):
    return schedule.grid() if t_samples is None else np.atleast_1d(np.asarray(t_samples, dtype=float))


@dataclass
class _Terms:
    """Per-time closed-form pieces, each an array over the time points."""

    big_omega: np.ndarray
    cross_entropy: np.ndarray  # -E_{q_t} log p_t with q_t the camera-marginal render law
    entropy: np.ndarray  # H[q_t]
    entropy_cond: np.ndarray  # H[q_t(.|c)], the same for every camera


def _logdet_stack(mats, what):
    sign, logdet = np.linalg.slogdet(mats)
    if np.any(sign <= 0) or not np.all(np.isfinite(logdet)):
        raise ValueError(f"{what} covariance is singular")
    return logdet


def _terms(generator, target, schedule, t_samples):
    _require_closed_form(generator, target)
    ts = _times(schedule, t_samples)
    a, s = schedule.alpha_sigma(ts)
    a, s = np.asarray(a, dtype=float), np.asarray(s, dtype=float)
    _, big_omega = schedule.weight(ts)
    D = generator.dim
    eye = np.eye(D)
    a2, s2 = (a * a)[:, None, None], (s * s)[:, None, None]
    P = a2 * target.sigma + s2 * eye
    Q = a2 * (generator.A @ generator.A.T) + s2 * eye
    diff = a[:, None] * (generator.b - target.mu)
    sol = np.linalg.solve(P, np.concatenate([Q, diff[:, :, None]], axis=2))
    trace = np.trace(sol[:, :, :D], axis1=1, axis2=2)
    quad = np.einsum("ni,ni->n", diff, sol[:, :, D])
    ce = 0.5 * (D * LOG_2PI + _logdet_stack(P, "target") + trace + quad)
    ent = 0.5 * D * (1.0 + LOG_2PI) + 0.5 * _logdet_stack(Q, "render")
    ent_cond = 0.5 * D * (1.0 + LOG_2PI) + D * np.log(s)
    return _Terms(np.asarray(big_omega, dtype=float), ce, ent, ent_cond)


def j_mle(generator, target, schedule, t_samples=None) -> float:
    """Weighted expected negative log-likelihood of noisy renders under the target.

    With cameras integrated out the inner expectation is a Gaussian
    cross-entropy, so the only approximation is the time average.
    """
    terms = _terms(generator, target, schedule, t_samples)
    return float(np.mean(terms.big_omega * target.prior_guidance * terms.cross_entropy))


def marginal_entropy_term(generator, schedule, t_samples=None) -> float:
    """Time-averaged ``Omega(t) * H[q_t]`` for the camera-marginal render law."""
    vals = []
    for t in _times(schedule, t_samples):
        _, big_omega = schedule.weight(t)
        vals.append(big_omega * entropy_gaussian(generator.marginal_distribution(t, schedule)))
    return float(np.mean(vals))


def j_ent(generator, target, lam, schedule, t_samples=None) -> float:
    terms = _terms(generator, target, schedule, t_samples)
    return float(np.mean(terms.big_omega * (target.prior_guidance * terms.cross_entropy - lam * terms.entropy)))


def j_kl_marginal(generator, target, schedule, t_samples=None) -> float:
    """Weighted KL between the camera-marginal render law and the target."""
    terms = _terms(generator, target, schedule, t_samples)
    return float(np.mean(terms.big_omega * (terms.cross_entropy - terms.entropy)))


def j_kl_conditional(generator, target, schedule, t_samples=None) -> float:
    """Weighted KL between per-camera render laws and the target, averaged over cameras.

    For ``c ~ N(0, I)`` the camera average of the cross-entropy equals the
    cross-entropy of the marginal law, and each conditional has entropy
    ``H[N(0, sigma_t^2 I)]``.
    """
    terms = _terms(generator, target, schedule, t_samples)
    return float(np.mean(terms.big_omega * (terms.cross_entropy - terms.entropy_cond)))


def grad_j_ent_analytic(generator, target, lam, schedule, t_samples=None) -> np.ndarray:
    """Exact gradient of :func:`j_ent` with respect to the flat ``(b, A)`` vector.

    Per time, with ``P = a^2 S* + s^2 I`` and ``Q = a^2 A A^T + s^2 I``::

        d/db = Omega * g * a * P^-1 (a b - a mu*)
        d/dA = Omega * a^2 * (g * P^-1 - lam * Q^-1) A

    where ``g`` is the prior guidance factor.
    """
    _require_closed_form(generator, target)
    b, A = generator.b, generator.A
    ts = _times(schedule, t_samples)
    a, s = schedule.alpha_sigma(ts)
    a, s = np.asarray(a, dtype=float), np.asarray(s, dtype=float)
    _, big_omega = schedule.weight(ts)
    big_omega = np.asarray(big_omega, dtype=float)
    eye = np.eye(generator.dim)
    gamma = target.prior_guidance
    a2, s2 = (a * a)[:, None, None], (s * s)[:, None, None]
    P = a2 * target.sigma + s2 * eye
    Q = a2 * (A @ A.T) + s2 * eye
    rhs = np.concatenate([np.broadcast_to(A, P.shape[:1] + A.shape),
                          (a * a)[:, None, None] * (b - target.mu)[None, :, None]], axis=2)
    solP = np.linalg.solve(P, rhs)
    solQ = np.linalg.solve(Q, np.broadcast_to(A, P.shape[:1] + A.shape))
    k = A.shape[1]
    grad_b = np.mean(big_omega[:, None] * gamma * solP[:, :, k], axis=0)
    w = (big_omega * a * a)[:, None, None]
    grad_A = np.mean(w * (gamma * solP[:, :, :k] - lam * solQ), axis=0)
    return np.concatenate([grad_b, grad_A.ravel()])


def finite_diff(f, theta, h=1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at flat ``theta``."""
    if not h > 0:
        raise ValueError("step h must be positive")
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for j in range(theta.size):
        up = theta.copy()
        down = theta.copy()
        up.flat[j] += h
        down.flat[j] -= h
        grad.flat[j] = (f(up) - f(down)) / (2.0 * h)
    return grad
