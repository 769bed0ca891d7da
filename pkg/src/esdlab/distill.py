"""Score-distillation update rules and the training loop.

Every rule returns a stochastic estimate of a parameter gradient of the form
``-omega(t) * (d g / d theta)^T residual`` evaluated at one or many draws of
``(c, t, eps)``. Residuals, with ``sp`` the prior score, ``sc`` the
camera-conditional render score and ``sm`` the camera-marginal render score:

=============  ==============================================
SDS            ``sigma * sp + eps``
VSD            ``sigma * (sp - sc)``
ESD (exact)    ``sigma * (sp - lam * sm)``
ESD (CFG)      ``sigma * ((sp - lam * sm) - (1 - lam) * sc)``
=============  ==============================================

The SDS residual is the usual noise-prediction form ``eps_phi - eps`` with
``eps_phi = -sigma * sp``, which makes it sample-wise identical to VSD when
VSD uses the exact conditional score ``-eps / sigma``.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .generators import RenderSample
from .score_model import NULL, AffineScoreModel


class ConfigError(ValueError):
    """An experiment configuration violates a documented invariant.

    ``key`` names the offending configuration key when one is known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class Method(str, enum.Enum):
    SDS = "SDS"
    VSD = "VSD"
    ESD_EXACT = "ESD_EXACT"
    ESD_CFG = "ESD_CFG"


_KERNEL_CODES = {Method.SDS: 0, Method.VSD: 1, Method.ESD_EXACT: 2, Method.ESD_CFG: 3}
STREAM_NAMES = ("camera", "time", "noise", "null", "init")


class RandomStreams:
    """Independent counter-based (Philox) generators, one per random consumer.

    Stream ``i`` is keyed by ``SeedSequence(seed, spawn_key=(i,))`` so a
    method that never flips the null coin still sees the same cameras, times
    and noises as one that does.
    """

    def __init__(self, seed):
        self.seed = int(seed)
        for i, name in enumerate(STREAM_NAMES):
            seq = np.random.SeedSequence(self.seed, spawn_key=(i,))
            setattr(self, name, np.random.Generator(np.random.Philox(seq)))


@dataclass
class DistillConfig:
    method: Method = Method.ESD_CFG
    lam: float = 0.5
    p_null: float = 0.5
    eta1: float = 0.01
    eta2: float = 1e-2
    steps: int = 2000
    warmup: int = 100
    seed: int = 0
    score_source: str | None = None
    log_every: int = 10
    init_scale: float = 1.0
    optimizer: str = "sgd"
    fit_marginal_directly: bool = False
    guard: float = 1e6

    def __post_init__(self):
        try:
            self.method = Method(self.method)
        except ValueError:
            raise ConfigError(f"unknown method {self.method!r}; expected one of "
                              f"{[m.value for m in Method]}", "distill.method") from None

    def validate(self):
        if self.method is not Method.SDS and self.score_source is None:
            raise ConfigError(f"method {self.method.value} needs a render score: set distill.score_source "
                              "to 'oracle' or 'learned'", "distill.score_source")
        if self.score_source not in (None, "oracle", "learned"):
            raise ConfigError(f"score_source must be 'oracle' or 'learned', got {self.score_source!r}",
                              "distill.score_source")
        if (self.method is Method.ESD_EXACT and self.score_source == "learned"
                and not self.fit_marginal_directly):
            raise ConfigError("ESD_EXACT with a learned marginal score is only available as the "
                              "distill.fit_marginal_directly experiment; use ESD_CFG instead",
                              "distill.fit_marginal_directly")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}", "distill.lambda")
        if not 0.0 <= self.p_null <= 1.0:
            raise ConfigError(f"p_null must lie in [0, 1], got {self.p_null}", "distill.p_null")
        if self.steps < 1:
            raise ConfigError("steps must be at least 1", "distill.steps")
        if not 0 <= self.warmup <= self.steps:
            raise ConfigError(f"need 0 <= warmup <= steps, got warmup={self.warmup}, steps={self.steps}",
                              "distill.warmup")
        if self.log_every < 1:
            raise ConfigError("log_every must be at least 1", "distill.log_every")
        if not self.eta1 > 0 or not self.eta2 > 0:
            raise ConfigError("learning rates must be positive", "distill.eta1")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}", "distill.optimizer")
        return self

    def lr_at(self, step):
        """Linear warmup from 0 to ``eta1`` over ``warmup`` steps."""
        if self.warmup == 0 or step >= self.warmup:
            return self.eta1
        return self.eta1 * step / self.warmup

    def to_dict(self):
        d = asdict(self)
        d["method"] = self.method.value
        return d


class OracleScores:
    """Exact render scores of the generator's current parameters."""

    def __init__(self, generator):
        self.generator = generator

    def conditional(self, x, t, c, schedule):
        return self.generator.score_q_conditional(x, t, c, schedule)

    def marginal(self, x, t, schedule):
        return self.generator.score_q_marginal(x, t, schedule)


class LearnedScores:
    """Render scores read off a trained :class:`AffineScoreModel`."""

    def __init__(self, model):
        self.model = model

    def conditional(self, x, t, c, schedule):
        return self.model.score(x, t, c, schedule)

    def marginal(self, x, t, schedule):
        return self.model.score(x, t, NULL, schedule)


def draw_sample(generator, schedule, streams, n=None):
    """Draw camera, time and noise from their own streams and form ``x_t``."""
    c = generator.sample_cameras(streams.camera, n)
    t = schedule.sample_t(streams.time, n)
    eps = streams.noise.standard_normal(generator.dim if n is None else (n, generator.dim))
    return RenderSample.build(c, generator.render(c), t, eps, schedule)


def _as_sample(generator, schedule, rng):
    if isinstance(rng, RenderSample):
        return rng
    if isinstance(rng, RandomStreams):
        return draw_sample(generator, schedule, rng)
    raise TypeError("expected a RenderSample or RandomStreams")


def _col(v):
    v = np.asarray(v, dtype=float)
    return v[:, None] if v.ndim == 1 else v


def _pullback(generator, schedule, sample, residual):
    omega = _col(schedule.omega(sample.t))
    return generator.render_jacobian_apply(sample.c, -omega * residual)


def _prior(target, schedule, sample):
    return target.score_p(sample.x_t, sample.t, schedule)


def sds_grad(generator, target, schedule, rng):
    sample = _as_sample(generator, schedule, rng)
    sp = _prior(target, schedule, sample)
    return _pullback(generator, schedule, sample, _col(sample.sigma) * sp + sample.eps)


def vsd_grad(generator, target, schedule, rng, cond_score=None):
    sample = _as_sample(generator, schedule, rng)
    cond_score = cond_score or OracleScores(generator)
    sp = _prior(target, schedule, sample)
    sc = cond_score.conditional(sample.x_t, sample.t, sample.c, schedule)
    return _pullback(generator, schedule, sample, _col(sample.sigma) * (sp - sc))


def esd_exact_grad(generator, target, schedule, lam, rng, marginal_score=None):
    sample = _as_sample(generator, schedule, rng)
    marginal_score = marginal_score or OracleScores(generator)
    sp = _prior(target, schedule, sample)
    sm = marginal_score.marginal(sample.x_t, sample.t, schedule)
    return _pullback(generator, schedule, sample, _col(sample.sigma) * (sp - lam * sm))


def esd_cfg_grad(generator, target, schedule, lam, rng, cond_score=None, marg_score=None):
    sample = _as_sample(generator, schedule, rng)
    cond_score = cond_score or OracleScores(generator)
    marg_score = marg_score or OracleScores(generator)
    sp = _prior(target, schedule, sample)
    sm = marg_score.marginal(sample.x_t, sample.t, schedule)
    sc = cond_score.conditional(sample.x_t, sample.t, sample.c, schedule)
    return _pullback(generator, schedule, sample, _col(sample.sigma) * ((sp - lam * sm) - (1.0 - lam) * sc))


def gradient(method, generator, target, schedule, rng, lam=0.0, cond_score=None, marg_score=None):
    method = Method(method)
    if method is Method.SDS:
        return sds_grad(generator, target, schedule, rng)
    if method is Method.VSD:
        return vsd_grad(generator, target, schedule, rng, cond_score)
    if method is Method.ESD_EXACT:
        return esd_exact_grad(generator, target, schedule, lam, rng, marg_score)
    return esd_cfg_grad(generator, target, schedule, lam, rng, cond_score, marg_score)


def mc_gradient(method, generator, target, schedule, n, seed, lam=0.0, cond_score=None, marg_score=None,
                batch=50_000):
    """Monte Carlo mean and standard error of a rule's gradient at fixed parameters."""
    streams = RandomStreams(seed)
    total = np.zeros(generator.n_params)
    total_sq = np.zeros(generator.n_params)
    done = 0
    while done < n:
        m = min(batch, n - done)
        g = gradient(method, generator, target, schedule, draw_sample(generator, schedule, streams, m),
                     lam, cond_score, marg_score)
        total += g.sum(axis=0)
        total_sq += (g * g).sum(axis=0)
        done += m
    mean = total / n
    var = np.maximum(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    return mean, np.sqrt(var / n)


@dataclass
class Trajectory:
    steps: np.ndarray
    thetas: np.ndarray
    grad_norms: np.ndarray
    final_params: np.ndarray
    diverged: bool = False
    abort_step: int = -1
    backend: str = "python"
    score_model: AffineScoreModel | None = field(default=None, repr=False)

    def to_csv(self):
        P = self.thetas.shape[1] if self.thetas.ndim == 2 else self.final_params.shape[0]
        lines = [",".join(["step"] + [f"theta_{i}" for i in range(P)] + ["grad_norm"])]
        for step, theta, gn in zip(self.steps, self.thetas, self.grad_norms):
            lines.append(",".join([str(int(step))] + [repr(float(v)) for v in theta] + [repr(float(gn))]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text):
        rows = [line.split(",") for line in text.strip().splitlines()]
        body = np.array([[float(v) for v in row] for row in rows[1:]]).reshape(-1, len(rows[0]))
        return cls(steps=body[:, 0].astype(np.int64), thetas=body[:, 1:-1], grad_norms=body[:, -1],
                   final_params=body[-1, 1:-1].copy() if len(body) else np.zeros(len(rows[0]) - 2))


@dataclass
class _RunNoise:
    cams: np.ndarray
    ts: np.ndarray
    alphas: np.ndarray
    sigmas: np.ndarray
    omegas: np.ndarray
    eps: np.ndarray
    coins: np.ndarray


def draw_run_noise(generator, schedule, streams, steps):
    cams = generator.sample_cameras(streams.camera, steps)
    ts = np.atleast_1d(schedule.sample_t(streams.time, steps))
    eps = streams.noise.standard_normal((steps, generator.dim))
    coins = streams.null.random(steps)
    alphas, sigmas = schedule.alpha_sigma(ts)
    omegas = schedule.omega(ts)
    return _RunNoise(cams, ts, np.asarray(alphas, dtype=float), np.asarray(sigmas, dtype=float),
                     np.asarray(omegas, dtype=float), eps, coins)


def _fast_path_ok(config, target, generator):
    return (generator.kind == "linear" and target.kind == "gaussian" and config.optimizer == "sgd"
            and config.score_source != "learned")


def run(config, target, generator, schedule, score_model=None):
    """Run the distillation loop; ``generator`` is updated in place.

    Per step: draw a camera and render, draw ``t`` and noise, form ``x_t``,
    move the generator along the configured rule, then (for learned scores)
    take one denoising step on the conditional branch with probability
    ``1 - p_null`` and on the null branch otherwise.
    """
    config.validate()
    if generator.dim != target.dim:
        raise ConfigError(f"generator renders dimension {generator.dim} but the target has {target.dim}",
                          "generator.D")
    learned = config.score_source == "learned"
    if learned and score_model is None:
        raise ConfigError("score_source 'learned' needs a score model", "distill.score_source")
    if not learned and score_model is not None:
        raise ConfigError("a score model was supplied but score_source is not 'learned'", "distill.score_source")

    streams = RandomStreams(config.seed)
    noise = draw_run_noise(generator, schedule, streams, config.steps)
    lrs = np.array([config.lr_at(s) for s in range(config.steps)])

    if _fast_path_ok(config, target, generator):
        steps, snaps, norms, final, abort = kernels.distill_linear_gaussian(
            generator.params.copy(), generator.dim, generator.k, target.mu, np.ascontiguousarray(target.sigma),
            target.prior_guidance, _KERNEL_CODES[config.method], float(config.lam),
            np.ascontiguousarray(noise.cams, dtype=float), noise.alphas, noise.sigmas, noise.omegas,
            np.ascontiguousarray(noise.eps), lrs, int(config.log_every), float(config.guard))
        generator.set_params(final)
        return Trajectory(steps, snaps, norms, final.copy(), diverged=abort >= 0, abort_step=abort,
                          backend=kernels.BACKEND)
    return _run_python(config, target, generator, schedule, score_model, noise, lrs)


def _run_python(config, target, generator, schedule, score_model, noise, lrs):
    learned = config.score_source == "learned"
    source = LearnedScores(score_model) if learned else OracleScores(generator)
    adam = config.optimizer == "adam"
    if adam:
        m1 = np.zeros(generator.n_params)
        m2 = np.zeros(generator.n_params)
    steps, snaps, norms = [], [], []
    abort = -1
    for s in range(config.steps):
        c = noise.cams[s]
        sample = RenderSample(c=c, x0=generator.render(c), t=noise.ts[s], eps=noise.eps[s],
                              alpha=noise.alphas[s], sigma=noise.sigmas[s], x_t=None)
        sample.x_t = RenderSample.noisy(sample.x0, sample.eps, sample.alpha, sample.sigma)
        grad = gradient(config.method, generator, target, schedule, sample, config.lam, source, source)
        if adam:
            m1 = 0.9 * m1 + 0.1 * grad
            m2 = 0.999 * m2 + 0.001 * grad * grad
            step = (m1 / (1 - 0.9 ** (s + 1))) / (np.sqrt(m2 / (1 - 0.999 ** (s + 1))) + 1e-8)
        else:
            step = grad
        generator.params -= lrs[s] * step
        if learned:
            use_null = config.fit_marginal_directly or noise.coins[s] < config.p_null
            score_model.dsm_step(sample, use_null, config.eta2, schedule)
        norm = np.sqrt(generator.params @ generator.params)
        if not np.isfinite(norm) or norm > config.guard:
            abort = s
        if abort >= 0 or s % config.log_every == 0 or s == config.steps - 1:
            steps.append(s)
            snaps.append(generator.params.copy())
            norms.append(float(np.sqrt(grad @ grad)))
        if abort >= 0:
            break
    return Trajectory(np.asarray(steps, dtype=np.int64), np.asarray(snaps), np.asarray(norms),
                      generator.params.copy(), diverged=abort >= 0, abort_step=abort, backend="python",
                      score_model=score_model)


def train_score_model(model, generator, schedule, steps, eta2, seed, use_null=False):
    """Fit one branch of ``model`` by denoising score matching with ``generator`` frozen."""
    streams = RandomStreams(seed)
    noise = draw_run_noise(generator, schedule, streams, steps)
    for s in range(steps):
        c = noise.cams[s]
        x0 = generator.render(c)
        sample = RenderSample(c=c, x0=x0, t=noise.ts[s], eps=noise.eps[s], alpha=noise.alphas[s],
                              sigma=noise.sigmas[s], x_t=RenderSample.noisy(x0, noise.eps[s], noise.alphas[s],
                                                                            noise.sigmas[s]))
        model.dsm_step(sample, use_null, eta2, schedule)
    return model
