"""Target distributions standing in for a pretrained diffusion prior.

Each target knows its exact time-0 sampler, the log density of its diffused
version at any time, and the closed-form diffused score. ``prior_guidance``
scales the score the way a guidance weight would scale a learned prior.
"""

from __future__ import annotations

import numpy as np

from ._gauss import PerturbedGaussian, PerturbedMixture


def _check_dim(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValueError(f"expected vectors of dimension {dim}, got shape {x.shape}")
    return x


class GaussianTarget:
    kind = "gaussian"

    def __init__(self, mu, sigma, prior_guidance=1.0):
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))
        self.sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        self.dim = self.mu.shape[0]
        if self.sigma.shape != (self.dim, self.dim):
            raise ValueError(f"Sigma_star must be {self.dim}x{self.dim}, got {self.sigma.shape}")
        if not np.allclose(self.sigma, self.sigma.T, rtol=0.0, atol=1e-12):
            raise ValueError("Sigma_star is not symmetric")
        if np.linalg.eigvalsh(self.sigma).min() <= 0:
            raise ValueError("Sigma_star is not positive definite")
        self.prior_guidance = float(prior_guidance)
        self._pg = PerturbedGaussian(self.mu, self.sigma)
        self._chol = np.linalg.cholesky(self.sigma)

    def perturbed(self, t, schedule):
        """Mean and covariance of the target diffused to time ``t``."""
        a, s = schedule.alpha_sigma(t)
        return a * self.mu, self._pg.covariance(a, s)

    def score_p(self, x, t, schedule):
        x = _check_dim(x, self.dim)
        a, s = schedule.alpha_sigma(t)
        return self.prior_guidance * self._pg.score(x, a, s)

    def log_density_t(self, x, t, schedule):
        x = _check_dim(x, self.dim)
        a, s = schedule.alpha_sigma(t)
        return self._pg.logpdf(x, a, s)

    def sample(self, rng, n):
        z = rng.standard_normal((n, self.dim))
        return self.mu + z @ self._chol.T

    def as_mixture(self):
        return MixtureTarget([1.0], [self], prior_guidance=self.prior_guidance)


class MixtureTarget:
    kind = "mixture"

    def __init__(self, weights, components, prior_guidance=1.0):
        self.weights = np.asarray(weights, dtype=float)
        self.components = list(components)
        if len(self.components) == 0 or len(self.components) != len(self.weights):
            raise ValueError("need one weight per mixture component")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must be nonnegative and sum to 1, got {self.weights}")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError(f"mixture components disagree on dimension: {sorted(dims)}")
        self.dim = dims.pop()
        self.prior_guidance = float(prior_guidance)
        self._mix = PerturbedMixture(self.weights, [c._pg for c in self.components])

    def score_p(self, x, t, schedule):
        x = _check_dim(x, self.dim)
        a, s = schedule.alpha_sigma(t)
        return self.prior_guidance * self._mix.score(x, a, s)

    def log_density_t(self, x, t, schedule):
        x = _check_dim(x, self.dim)
        a, s = schedule.alpha_sigma(t)
        return self._mix.logpdf(x, a, s)

    def component_log_density_t(self, x, t, schedule):
        a, s = schedule.alpha_sigma(t)
        return np.stack([c._pg.logpdf(x, a, s) for c in self.components], axis=-1)

    def sample(self, rng, n):
        labels = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for k, comp in enumerate(self.components):
            idx = np.flatnonzero(labels == k)
            if idx.size:
                out[idx] = comp.sample(rng, idx.size)
        return out

    def as_mixture(self):
        return self
