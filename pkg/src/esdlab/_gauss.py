"""Gaussians and Gaussian mixtures pushed through the forward diffusion.

A time-0 law ``N(m, C)`` becomes ``N(alpha m, alpha^2 C + sigma^2 I)`` at time t.
Covariances are eigendecomposed once, so per-row times cost O(D^2) each.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp, softmax

LOG_2PI = float(np.log(2.0 * np.pi))


def _rows(x, a, s):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    n = x2.shape[0]
    a = np.broadcast_to(np.asarray(a, dtype=float), (n,))
    s = np.broadcast_to(np.asarray(s, dtype=float), (n,))
    return x2, a, s, single


class PerturbedGaussian:
    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        self.dim = self.mean.shape[0]
        if cov.shape != (self.dim, self.dim):
            raise ValueError(f"covariance shape {cov.shape} does not match mean dimension {self.dim}")
        evals, self.evecs = np.linalg.eigh(0.5 * (cov + cov.T))
        self.evals = np.clip(evals, 0.0, None)

    def variances(self, a, s):
        """Per-eigendirection variances, shape ``(n, D)``."""
        return a[:, None] ** 2 * self.evals[None, :] + s[:, None] ** 2

    def score(self, x, a, s):
        x2, a, s, single = _rows(x, a, s)
        y = (a[:, None] * self.mean[None, :] - x2) @ self.evecs
        out = (y / self.variances(a, s)) @ self.evecs.T
        return out[0] if single else out

    def logpdf(self, x, a, s):
        x2, a, s, single = _rows(x, a, s)
        var = self.variances(a, s)
        y = (x2 - a[:, None] * self.mean[None, :]) @ self.evecs
        out = -0.5 * (self.dim * LOG_2PI + np.log(var).sum(axis=1) + (y * y / var).sum(axis=1))
        return out[0] if single else out

    def covariance(self, a, s):
        return a ** 2 * (self.evecs * self.evals) @ self.evecs.T + s ** 2 * np.eye(self.dim)


class PerturbedMixture:
    def __init__(self, weights, components):
        self.weights = np.asarray(weights, dtype=float)
        self.components = list(components)
        self.dim = self.components[0].dim
        with np.errstate(divide="ignore"):
            self.log_weights = np.log(self.weights)

    def _log_joint(self, x, a, s):
        return np.stack([lw + comp.logpdf(x, a, s)
                         for lw, comp in zip(self.log_weights, self.components)], axis=-1)

    def responsibilities(self, x, a, s):
        return softmax(self._log_joint(x, a, s), axis=-1)

    def logpdf(self, x, a, s):
        return logsumexp(self._log_joint(x, a, s), axis=-1)

    def score(self, x, a, s):
        x2, a2, s2, single = _rows(x, a, s)
        resp = self.responsibilities(x2, a2, s2)
        scores = np.stack([comp.score(x2, a2, s2) for comp in self.components], axis=1)
        out = np.einsum("nk,nkd->nd", resp, scores)
        return out[0] if single else out
