"""Pure-numpy twin of the compiled distillation loop in ``_kernels.pyx``."""

import numpy as np

SDS, VSD, ESD_EXACT, ESD_CFG = range(4)


def distill_linear_gaussian(params0, D, k, mu, sigma_star, guidance, method, lam,
                            cams, alphas, sigmas, omegas, eps, lrs, log_every, guard):
    theta = np.array(params0, dtype=float, copy=True)
    n = alphas.shape[0]
    eye = np.eye(D)
    need_marg = method in (ESD_EXACT, ESD_CFG)
    steps, snaps, norms = [], [], []
    abort_step = -1
    for s in range(n):
        a, sg, om = alphas[s], sigmas[s], omegas[s]
        b = theta[:D]
        A = theta[D:].reshape(D, k)
        c = cams[s]
        g = b + A @ c
        x = a * g + sg * eps[s]
        try:
            sp = guidance * np.linalg.solve(a * a * sigma_star + sg * sg * eye, a * mu - x)
            if need_marg:
                sm = np.linalg.solve(a * a * (A @ A.T) + sg * sg * eye, a * b - x)
        except np.linalg.LinAlgError:
            abort_step = s
            break
        if method == SDS:
            r = sg * sp + eps[s]
        elif method == VSD:
            r = sg * (sp - (a * g - x) / (sg * sg))
        elif method == ESD_EXACT:
            r = sg * (sp - lam * sm)
        else:
            r = sg * ((sp - lam * sm) - (1.0 - lam) * ((a * g - x) / (sg * sg)))
        r = -om * r
        grad = np.concatenate([r, np.outer(r, c).ravel()])
        theta -= lrs[s] * grad
        norm = np.sqrt(theta @ theta)
        if not np.isfinite(norm) or norm > guard:
            abort_step = s
        if abort_step >= 0 or s % log_every == 0 or s == n - 1:
            steps.append(s)
            snaps.append(theta.copy())
            norms.append(float(np.sqrt(grad @ grad)))
        if abort_step >= 0:
            break
    P = D + D * k
    return (np.asarray(steps, dtype=np.int64), np.asarray(snaps, dtype=float).reshape(-1, P),
            np.asarray(norms, dtype=float), theta, abort_step)
