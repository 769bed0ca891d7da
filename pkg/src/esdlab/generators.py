"""Parametric generators: the stand-in for a 3D scene and its renderer.

A generator owns a flat parameter vector ``params`` and renders a
deterministic image ``g(params, c)`` for a camera ``c`` drawn from its prior.
Two families are provided:

``LinearGaussianGenerator``
    ``g = b + A c`` with ``c ~ N(0, I_k)``; every diffused law is Gaussian.
``DiscreteViewGenerator``
    ``g = views[c]`` with ``c`` uniform over ``K`` indices; the diffused
    camera-marginal law is an equal-weight Gaussian mixture.

Batched calls take a leading sample axis on ``x``, ``t`` and ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._gauss import PerturbedGaussian, PerturbedMixture
from .objective import GaussianMoments, MixtureMoments
from .schedule import ScheduleDomainError


@dataclass
class RenderSample:
    """One draw of the distillation noise process.

    ``x_t`` is always ``alpha * x0 + sigma * eps`` evaluated in that order.
    """

    c: np.ndarray
    x0: np.ndarray
    t: np.ndarray
    eps: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    x_t: np.ndarray

    @classmethod
    def build(cls, c, x0, t, eps, schedule):
        t = np.asarray(t, dtype=float)
        alpha, sigma = schedule.alpha_sigma(t)
        alpha = np.asarray(alpha, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        x_t = cls.noisy(x0, eps, alpha, sigma)
        return cls(c=np.asarray(c), x0=np.asarray(x0, dtype=float), t=t, eps=np.asarray(eps, dtype=float),
                   alpha=alpha, sigma=sigma, x_t=x_t)

    @staticmethod
    def noisy(x0, eps, alpha, sigma):
        alpha = np.asarray(alpha, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        if alpha.ndim == 1:
            alpha = alpha[:, None]
            sigma = sigma[:, None]
        return alpha * x0 + sigma * eps

    @property
    def batched(self):
        return np.ndim(self.t) == 1

    def __len__(self):
        return int(np.shape(self.t)[0]) if self.batched else 1


def _col(v):
    v = np.asarray(v, dtype=float)
    return v[:, None] if v.ndim == 1 else v


class _Generator:
    kind = ""

    def copy(self):
        out = object.__new__(type(self))
        out.__dict__.update(self.__dict__)
        out.params = self.params.copy()
        return out

    def with_params(self, params):
        out = self.copy()
        out.set_params(params)
        return out

    def set_params(self, params):
        params = np.asarray(params, dtype=float)
        if params.shape != self.params.shape:
            raise ValueError(f"expected {self.params.shape[0]} parameters, got shape {params.shape}")
        self.params[...] = params

    @property
    def n_params(self):
        return self.params.shape[0]

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected vectors of dimension {self.dim}, got shape {x.shape}")
        return x

    def score_q_conditional(self, x, t, c, schedule):
        """Score of ``N(alpha g(c), sigma^2 I)``: ``(alpha g - x) / sigma^2``."""
        x = self._check_x(x)
        a, s = schedule.alpha_sigma(t)
        if np.any(np.asarray(s) == 0):
            raise ScheduleDomainError("conditional render score is undefined at sigma_t = 0")
        g = self.render(c)
        if np.ndim(a) == 1:
            a, s = _col(a), _col(s)
        return (a * g - x) / (s * s)

    def score_q_marginal(self, x, t, schedule):
        x = self._check_x(x)
        a, s = schedule.alpha_sigma(t)
        if np.any(np.asarray(s) == 0):
            raise ScheduleDomainError("marginal render score is undefined at sigma_t = 0")
        return self._marginal_law().score(x, a, s)

    def log_q_marginal(self, x, t, schedule):
        a, s = schedule.alpha_sigma(t)
        return self._marginal_law().logpdf(self._check_x(x), a, s)

    def sample_renders(self, rng, n):
        return self.render(self.sample_cameras(rng, n))


class LinearGaussianGenerator(_Generator):
    kind = "linear"

    def __init__(self, b, A):
        b = np.atleast_1d(np.asarray(b, dtype=float))
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A must have {b.shape[0]} rows, got shape {A.shape}")
        self.dim = b.shape[0]
        self.k = A.shape[1]
        self.params = np.concatenate([b, A.ravel()])

    @classmethod
    def initial(cls, D, k, init_scale=1.0):
        return cls(np.zeros(D), init_scale * np.eye(D, k))

    @property
    def b(self):
        return self.params[: self.dim]

    @property
    def A(self):
        return self.params[self.dim:].reshape(self.dim, self.k)

    def sample_cameras(self, rng, n=None):
        return rng.standard_normal(self.k if n is None else (n, self.k))

    def _check_c(self, c):
        c = np.asarray(c, dtype=float)
        if c.shape[-1] != self.k:
            raise ValueError(f"camera must have dimension {self.k}, got shape {c.shape}")
        return c

    def render(self, c):
        c = self._check_c(c)
        return self.b + c @ self.A.T

    def render_jacobian_apply(self, c, v):
        """``(d g / d params)^T v``: ``v`` for ``b`` and ``v c^T`` for ``A``."""
        c = self._check_c(c)
        v = self._check_x(v)
        if c.ndim != v.ndim:
            raise ValueError("camera and vector batches disagree")
        outer = v[..., :, None] * c[..., None, :]
        return np.concatenate([v, outer.reshape(*v.shape[:-1], self.dim * self.k)], axis=-1)

    def _marginal_law(self):
        A = self.A
        return PerturbedGaussian(self.b, A @ A.T)

    def marginal_distribution(self, t, schedule):
        a, s = schedule.alpha_sigma(t)
        A = self.A
        return GaussianMoments(a * self.b, a * a * (A @ A.T) + s * s * np.eye(self.dim))


class DiscreteViewGenerator(_Generator):
    """Cameras are 0-based indices into the rows of ``views``."""

    kind = "discrete"

    def __init__(self, views):
        views = np.asarray(views, dtype=float)
        if views.ndim == 1:
            views = views[:, None]
        self.K, self.dim = views.shape
        self.params = views.ravel().copy()

    @classmethod
    def initial(cls, K, D, rng, init_scale=1.0):
        return cls(init_scale * rng.standard_normal((K, D)))

    @property
    def views(self):
        return self.params.reshape(self.K, self.dim)

    def sample_cameras(self, rng, n=None):
        return rng.integers(0, self.K, size=n)

    def _check_c(self, c):
        c = np.asarray(c)
        if not np.issubdtype(c.dtype, np.integer):
            if np.any(c != np.round(c)):
                raise ValueError(f"camera indices must be integers, got {c}")
            c = c.astype(np.int64)
        if np.any(c < 0) or np.any(c >= self.K):
            raise ValueError(f"camera index out of range [0, {self.K}): {c}")
        return c

    def render(self, c):
        return self.views[self._check_c(c)]

    def render_jacobian_apply(self, c, v):
        c = self._check_c(c)
        v = self._check_x(v)
        if c.ndim == 0:
            out = np.zeros((self.K, self.dim))
            out[c] = v
            return out.ravel()
        out = np.zeros((c.shape[0], self.K, self.dim))
        out[np.arange(c.shape[0]), c] = v
        return out.reshape(c.shape[0], self.K * self.dim)

    def _marginal_law(self):
        zero = np.zeros((self.dim, self.dim))
        return PerturbedMixture(np.full(self.K, 1.0 / self.K), [PerturbedGaussian(v, zero) for v in self.views])

    def marginal_distribution(self, t, schedule):
        a, s = schedule.alpha_sigma(t)
        covs = np.broadcast_to(s * s * np.eye(self.dim), (self.K, self.dim, self.dim)).copy()
        return MixtureMoments(np.full(self.K, 1.0 / self.K), a * self.views, covs)
