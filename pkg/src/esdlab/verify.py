"""Machine-checked identities behind the update rules.

Each suite returns a list of :class:`Check` records; ``run_suites`` prints one
line per check. Monte Carlo suites use fixed seeds, so outcomes are
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import objective
from .distill import DistillConfig, Method, RandomStreams, draw_sample, gradient, mc_gradient, run
from .generators import DiscreteViewGenerator, LinearGaussianGenerator
from .metrics import SyntheticClassifier, quality_variety
from .schedule import DiffusionSchedule
from .score_model import COND_KEYS, AffineScoreModel
from .targets import GaussianTarget, MixtureTarget

MC_SAMPLES = 100_000


@dataclass
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"[{status}] {self.name}: measured {self.measured:.3e} vs tolerance {self.tolerance:.3e}{extra}"


def _le(name, measured, tol, detail=""):
    return Check(name, float(measured), float(tol), bool(measured <= tol), detail)


def lab_problem():
    """Two-dimensional Gaussian problem used by the reference experiment."""
    schedule = DiffusionSchedule()
    target = GaussianTarget([1.0, -1.0], np.diag([1.0, 0.25]))
    gen = LinearGaussianGenerator([0.3, -0.2], [[0.8, 0.1], [-0.2, 0.5]])
    return schedule, target, gen


def discrete_problem():
    """One-dimensional two-view generator (views -1 and +1) against N(0.5, 0.8)."""
    schedule = DiffusionSchedule()
    target = GaussianTarget([0.5], [[0.8]])
    gen = DiscreteViewGenerator([[-1.0], [1.0]])
    return schedule, target, gen


def fine_time_grid(schedule, n=4096):
    """Midpoint grid for comparing quadrature-based objectives with uniform-t Monte Carlo."""
    h = (schedule.t_max - schedule.t_min) / n
    return schedule.t_min + h * (np.arange(n) + 0.5)


def zero_mean_score(n=MC_SAMPLES, seed=0):
    schedule, target, gen = lab_problem()
    checks = []
    streams = RandomStreams(seed)
    sample = draw_sample(gen, schedule, streams, n)
    s_cond = gen.score_q_conditional(sample.x_t, sample.t, sample.c, schedule)
    s_prior = None
    x0 = target.sample(streams.init, n)
    t = schedule.sample_t(streams.time, n)
    a, s = schedule.alpha_sigma(t)
    x_t = a[:, None] * x0 + s[:, None] * streams.noise.standard_normal((n, target.dim))
    s_prior = target.score_p(x_t, t, schedule) / target.prior_guidance
    for name, vals in (("conditional render score", s_cond), ("perturbed target score", s_prior)):
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / np.sqrt(n)
        checks.append(_le(f"zero-mean {name}", np.linalg.norm(mean), 3 * np.linalg.norm(se), "norm of MC mean vs 3 SE"))
    return checks


def _agree(name, m1, se1, m2, se2=None):
    se = np.sqrt(se1 ** 2 + (0.0 if se2 is None else se2 ** 2))
    z = np.max(np.abs(m1 - m2) / np.maximum(se, 1e-300))
    return _le(name, z, 3.0, "max |difference| in combined standard errors")


def theorem1(n=MC_SAMPLES, seed=1):
    checks = []
    schedule, target, gen = discrete_problem()
    for i, lam in enumerate((0.25, 0.5, 0.75)):
        m_cfg, se_cfg = mc_gradient(Method.ESD_CFG, gen, target, schedule, n, seed + 10 * i, lam=lam)
        m_ex, se_ex = mc_gradient(Method.ESD_EXACT, gen, target, schedule, n, seed + 10 * i + 5, lam=lam)
        checks.append(_agree(f"discrete K=2 lambda={lam}: E[cfg] = E[exact]", m_cfg, se_cfg, m_ex, se_ex))
    schedule, target, gen = lab_problem()
    grid = fine_time_grid(schedule)
    for i, lam in enumerate((0.25, 0.5, 0.75)):
        exact = objective.grad_j_ent_analytic(gen, target, lam, schedule, grid)
        m_cfg, se_cfg = mc_gradient(Method.ESD_CFG, gen, target, schedule, n, seed + 100 + 10 * i, lam=lam)
        m_ex, se_ex = mc_gradient(Method.ESD_EXACT, gen, target, schedule, n, seed + 105 + 10 * i, lam=lam)
        checks.append(_agree(f"linear lambda={lam}: E[cfg] = analytic", m_cfg, se_cfg, exact))
        checks.append(_agree(f"linear lambda={lam}: E[exact] = analytic", m_ex, se_ex, exact))
    return checks


def sds_vsd_expectation(n=MC_SAMPLES, seed=2):
    schedule, target, gen = lab_problem()
    exact = objective.grad_j_ent_analytic(gen, target, 0.0, schedule, fine_time_grid(schedule))
    checks = []
    for i, method in enumerate((Method.SDS, Method.VSD, Method.ESD_CFG)):
        m, se = mc_gradient(method, gen, target, schedule, n, seed + i, lam=0.0)
        checks.append(_agree(f"E[{method.value} (lambda=0)] = analytic gradient", m, se, exact))
    return checks


def _lambda0_pair(score_source, p_null, seed=3):
    schedule, target, _ = lab_problem()
    out = []
    for method in (Method.ESD_CFG, Method.VSD):
        gen = LinearGaussianGenerator.initial(2, 2)
        model = AffineScoreModel.for_generator(gen) if score_source == "learned" else None
        cfg = DistillConfig(method=method, lam=0.0, p_null=p_null, score_source=score_source, seed=seed, steps=500,
                            warmup=50, log_every=1)
        out.append((run(cfg, target, gen, schedule, model), model))
    return out


def lambda0_reduction():
    checks = []
    for source in ("oracle", "learned"):
        (tr_cfg, m_cfg), (tr_vsd, m_vsd) = _lambda0_pair(source, 0.0)
        same = tr_cfg.to_csv() == tr_vsd.to_csv()
        if source == "learned":
            same = same and all(np.array_equal(m_cfg.params[k], m_vsd.params[k]) for k in m_cfg.params)
        checks.append(Check(f"ESD_CFG(lambda=0) run == VSD run, {source} scores", 0.0 if same else 1.0, 0.0, same,
                            "bitwise trajectory comparison"))
    return checks


def reductions(n=10_000, seed=4):
    schedule, target, gen = lab_problem()
    sample = draw_sample(gen, schedule, RandomStreams(seed), n)
    vsd = gradient(Method.VSD, gen, target, schedule, sample)
    cfg0 = gradient(Method.ESD_CFG, gen, target, schedule, sample, lam=0.0)
    sds = gradient(Method.SDS, gen, target, schedule, sample)
    cfg1 = gradient(Method.ESD_CFG, gen, target, schedule, sample, lam=1.0)
    exact1 = gradient(Method.ESD_EXACT, gen, target, schedule, sample, lam=1.0)
    checks = [
        Check("ESD_CFG(lambda=0) == VSD sample-wise", float(np.max(np.abs(cfg0 - vsd))), 0.0,
              bool(np.array_equal(cfg0, vsd)), "bitwise"),
        Check("ESD_CFG(lambda=1) == ESD_EXACT(lambda=1) sample-wise", float(np.max(np.abs(cfg1 - exact1))), 0.0,
              bool(np.array_equal(cfg1, exact1)), "bitwise"),
        _le("VSD(oracle) == SDS sample-wise", np.max(np.abs(vsd - sds) / np.maximum(1.0, np.abs(sds))), 1e-12),
    ]
    gen = LinearGaussianGenerator.initial(2, 2)
    model = AffineScoreModel.for_generator(gen)
    model.params["Wc"][:] = 0.01
    before = {k: model.params[k].copy() for k in COND_KEYS}
    cfg = DistillConfig(method=Method.ESD_CFG, lam=0.5, p_null=1.0, score_source="learned", seed=seed, steps=500,
                        warmup=50)
    run(cfg, target, gen, schedule, model)
    unchanged = all(np.array_equal(before[k], model.params[k]) for k in COND_KEYS)
    checks.append(Check("p_null=1 leaves the conditional branch untouched", 0.0 if unchanged else 1.0, 0.0,
                        unchanged, "bitwise"))
    return checks


def random_linear(rng, D=2, k=2):
    return LinearGaussianGenerator(rng.normal(size=D), rng.normal(size=(D, k)))


def analytic_gradient(n_points=50, seed=5, h=1e-5):
    schedule, target, _ = lab_problem()
    rng = np.random.default_rng(seed)
    checks = []
    for lam in (0.0, 0.5, 1.0):
        worst = 0.0
        for _ in range(n_points):
            gen = random_linear(rng)
            exact = objective.grad_j_ent_analytic(gen, target, lam, schedule)
            fd = objective.finite_diff(lambda p: objective.j_ent(gen.with_params(p), target, lam, schedule),
                                       gen.params, h)
            worst = max(worst, np.linalg.norm(exact - fd) / max(np.linalg.norm(exact), 1e-12))
        checks.append(_le(f"analytic vs finite-difference gradient, lambda={lam}", worst, 1e-5,
                          f"max relative error over {n_points} points"))
    return checks


def _theta_differences(f_left, f_right, gens):
    base_l, base_r = f_left(gens[0]), f_right(gens[0])
    return max(abs((f_left(g) - base_l) - (f_right(g) - base_r)) for g in gens[1:])


def objective_identities(seed=6, n_points=10):
    schedule, target, _ = lab_problem()
    rng = np.random.default_rng(seed)
    gens = [random_linear(rng) for _ in range(n_points)]
    checks = [_le("J_MLE - J_KL is constant in theta",
                  _theta_differences(lambda g: objective.j_mle(g, target, schedule),
                                     lambda g: objective.j_kl_conditional(g, target, schedule), gens), 1e-8)]
    for lam in (0.0, 0.3, 0.5, 1.0):
        def combo(g, lam=lam):
            return (lam * objective.j_kl_marginal(g, target, schedule)
                    + (1 - lam) * objective.j_kl_conditional(g, target, schedule))
        checks.append(_le(f"J_Ent - (lam*KL_marginal + (1-lam)*KL_conditional) constant in theta, lambda={lam}",
                          _theta_differences(lambda g, lam=lam: objective.j_ent(g, target, lam, schedule), combo,
                                             gens), 1e-8))
    return checks


def marginal_consistency(n=MC_SAMPLES, seed=7, n_points=5):
    """Posterior-weighted conditional scores reproduce the marginal score."""
    schedule, _, gen = lab_problem()
    rng = np.random.default_rng(seed)
    checks = []
    worst_z = 0.0
    for _ in range(n_points):
        t = rng.uniform(schedule.t_min, schedule.t_max)
        x = rng.normal(size=gen.dim)
        cams = gen.sample_cameras(rng, n)
        a, s = schedule.alpha_sigma(t)
        resid = a * gen.render(cams) - x
        logw = -0.5 * (resid * resid).sum(axis=1) / s ** 2
        w = np.exp(logw - logw.max())
        w /= w.sum()
        scores = resid / s ** 2
        est = w @ scores
        se = np.sqrt((w[:, None] ** 2 * (scores - est) ** 2).sum(axis=0))
        exact = gen.score_q_marginal(x, t, schedule)
        worst_z = max(worst_z, float(np.max(np.abs(est - exact) / se)))
    checks.append(_le("linear: weighted conditional scores = marginal score", worst_z, 3.0,
                      "max |difference| in standard errors"))
    schedule, _, dgen = discrete_problem()
    xs = rng.normal(size=(100, 1))
    ts = rng.uniform(schedule.t_min, schedule.t_max, 100)
    a, s = schedule.alpha_sigma(ts)
    comps = np.stack([dgen.score_q_conditional(xs, ts, np.full(100, c), schedule) for c in range(dgen.K)], axis=1)
    logq = np.stack([-0.5 * ((xs - a[:, None] * dgen.views[c]) ** 2).sum(axis=1) / s ** 2 for c in range(dgen.K)],
                    axis=1)
    resp = np.exp(logq - logq.max(axis=1, keepdims=True))
    resp /= resp.sum(axis=1, keepdims=True)
    enum = np.einsum("nk,nkd->nd", resp, comps)
    err = np.max(np.abs(enum - dgen.score_q_marginal(xs, ts, schedule)))
    checks.append(_le("discrete: enumerated conditional scores = marginal score", err, 1e-10))
    return checks


def jacobian(seed=8, n_points=100, h=1e-5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        gen = random_linear(rng, 3, 2)
        c = rng.normal(size=2)
        v = rng.normal(size=3)
        fd = objective.finite_diff(lambda p: gen.with_params(p).render(c) @ v, gen.params, h)
        exact = gen.render_jacobian_apply(c, v)
        worst = max(worst, np.linalg.norm(exact - fd) / max(np.linalg.norm(exact), 1e-12))
    return [_le("render Jacobian vs finite differences", worst, 1e-5, f"max relative error over {n_points} points")]


def jensen(seed=9, trials=1000):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(trials):
        K = int(rng.integers(2, 5))
        comps = [GaussianTarget(rng.normal(scale=2.0, size=2), np.diag(rng.uniform(0.2, 2.0, 2))) for _ in range(K)]
        clf = SyntheticClassifier(MixtureTarget(rng.dirichlet(np.ones(K)), comps), rng.uniform(0.3, 3.0))
        iq, iv = quality_variety(rng.normal(scale=3.0, size=(int(rng.integers(1, 20)), 2)), clf)
        worst = max(worst, iq - iv)
    return [_le("IQ - IV over randomized trials", worst, 1e-10, f"{trials} trials")]


SUITES = {
    "zero-mean-score": zero_mean_score,
    "theorem1": theorem1,
    "sds-vsd-expectation": sds_vsd_expectation,
    "lambda0-reduction": lambda0_reduction,
    "reductions": reductions,
    "analytic-gradient": analytic_gradient,
    "objective-identities": objective_identities,
    "marginal-consistency": marginal_consistency,
    "jacobian": jacobian,
    "jensen": jensen,
}


def run_suites(names, out=print):
    """Run the named suites (or ``all``); return True iff every check passed."""
    if names == ["all"] or names == "all":
        names = list(SUITES)
    ok = True
    for name in names:
        out(f"== {name}")
        for check in SUITES[name]():
            out(check.line())
            ok = ok and check.passed
    return ok
