"""Numerical checks for the order-sensitivity theory.

The quantities here tie a second-order expansion of SGD's epoch update to
order statistics of the per-step gradients:

- xi_term: the cross-term (2 / (N(N-1))) * sum_j sum_{k<j} g(X_j) X_k
  evaluated for a sequence in the order given. Sorting the sequence
  descending gives the adversarial value; the gap between sorted and
  as-given is what an ordering attack can harvest.
- estimate_Kn / k_infinity: the constant relating that gap to sigma/mu
  for standardized draws. k_infinity integrates
  2 * int int_{v >= u} v f(u) f(v) du dv by nested adaptive quadrature;
  estimate_Kn Monte-Carlos the finite-N constant from sorted samples.
  (For iid draws the finite-N constant collapses to E[max of two draws],
  so the N-trend is flat; the tests pin that.)
- attack_success_condition: the sigma/mu threshold test, in its stated
  form and in the form the derivation actually supports (they differ by
  a factor of K-infinity squared; both are reported).
- sample_size_bound: how many unseen draws an observer needs before some
  batch reconstructs a target gradient to epsilon, for confidence 1 - p.
- bias_term: the per-step inner product <full_grad, batch_grad -
  full_grad> whose epoch mean an honest shuffle keeps near zero.
"""

from math import log

import numpy as np
from scipy import integrate
from scipy import stats

from .errors import DimensionError, NumericError
from .tensor import dot, lsum
from .training import run_training


def _xi_rows(draws, g):
    # per-row xi for a (trials, N) array, fixed left-to-right accumulation
    n = draws.shape[1]
    gvals = np.ones_like(draws) if g is None else np.asarray(g(draws), dtype=np.float64)
    prefix = np.cumsum(draws, axis=1)
    terms = gvals[:, 1:] * prefix[:, :-1]
    total = np.cumsum(terms, axis=1)[:, -1]
    return 2.0 * total / (n * (n - 1))


def xi_term(values, g=None):
    """Exact cross-term of one sequence, in the order given.

    g maps each later element to its weight (identity weight when None);
    it must accept numpy arrays. Needs at least two elements.
    """
    xs = np.asarray(values, dtype=np.float64)
    if xs.ndim != 1 or xs.size < 2:
        raise DimensionError("xi_term needs a 1-d sequence of length >= 2")
    if not np.all(np.isfinite(xs)):
        raise NumericError("xi_term: non-finite values")
    return float(_xi_rows(xs[None, :], g)[0])


def xi_order_gap(sampler, n, trials, gen, g=None):
    """Monte Carlo of the adversarial-vs-honest xi gap.

    sampler(gen, shape) draws iid values. Returns means and standard
    errors for the as-drawn sequence, the descending-sorted sequence, and
    their per-trial difference.
    """
    if n < 2 or trials < 2:
        raise DimensionError("need n >= 2 and trials >= 2")
    draws = sampler(gen, (trials, n))
    asis = _xi_rows(draws, g)
    sorted_desc = np.sort(draws, axis=1)[:, ::-1]
    worst = _xi_rows(sorted_desc, g)
    gap = worst - asis

    def _stats(v):
        return float(np.mean(v)), float(np.std(v, ddof=1) / np.sqrt(trials))

    out = {}
    out["mean_asis"], out["se_asis"] = _stats(asis)
    out["mean_sorted"], out["se_sorted"] = _stats(worst)
    out["mean_gap"], out["se_gap"] = _stats(gap)
    return out


def estimate_Kn(n, trials, gen, sampler):
    """Monte Carlo estimate of the finite-N ordering constant.

    K_N = (2 / (N(N-1))) * sum_i sum_{j<i} E[Z_(j)] with Z_(1) the largest
    of N standardized draws; equivalently the sorted draws weighted by
    N - rank. sampler(gen, shape) must produce mean-0, variance-1 draws.
    Returns (estimate, stderr).
    """
    if n < 2:
        raise DimensionError("K_N needs N >= 2")
    draws = sampler(gen, (trials, n))
    z = np.sort(draws, axis=1)[:, ::-1]
    w = (n - np.arange(1, n + 1)).astype(np.float64)
    per = 2.0 * np.cumsum(z * w, axis=1)[:, -1] / (n * (n - 1))
    return float(np.mean(per)), float(np.std(per, ddof=1) / np.sqrt(trials))


def k_infinity(pdf, support=(-10.0, 10.0), epsabs=1e-9, check_normalization=True):
    """Limit ordering constant 2 * int int_{v>=u} v f(u) f(v) dv du.

    Nested adaptive (Gauss-Kronrod) quadrature over a truncated support;
    pass the actual support for bounded densities. The pdf must be
    standardized (mean 0, variance 1) for the constant to be comparable
    across distributions, and must integrate to 1 on the support.
    """
    lo, hi = support
    if check_normalization:
        total, _ = integrate.quad(pdf, lo, hi, epsabs=epsabs, limit=200)
        if abs(total - 1.0) > 1e-6:
            raise NumericError(
                f"pdf integrates to {total:.8f} on [{lo}, {hi}], not 1; "
                "pass the correct support or normalize"
            )

    def inner(u):
        val, _ = integrate.quad(lambda v: v * pdf(v), u, hi, epsabs=epsabs, limit=200)
        return pdf(u) * val

    val, _ = integrate.quad(inner, lo, hi, epsabs=epsabs, limit=200)
    return 2.0 * val


K_INF_NORMAL = 1.0 / np.sqrt(np.pi)  # closed form for the standard normal


def attack_success_condition(mu, sigma, m, M, k_inf=K_INF_NORMAL, form="stated"):
    """Threshold test for whether ordering alone can defeat convergence.

    stated form:   sigma/mu >= k_inf * (M/m - 1)
    derived form:  sigma/mu >= (M/m - 1) / k_inf
    (the derivation multiplies the ratio by K rather than dividing, hence
    the second form; both are exposed so reports can show the pair).

    Returns (satisfied, lhs, rhs).
    """
    if mu <= 0:
        raise ValueError(f"mean gradient magnitude mu must be positive, got {mu}")
    if sigma < 0:
        raise ValueError(f"negative sigma {sigma}")
    if m <= 0:
        raise ValueError(f"smoothness lower bound m must be positive, got {m}")
    if k_inf <= 0:
        raise ValueError(f"ordering constant must be positive, got {k_inf}")
    if form not in ("stated", "derived"):
        raise ValueError(f"form must be 'stated' or 'derived', got {form!r}")
    lhs = sigma / mu
    ratio = M / m - 1.0
    rhs = k_inf * ratio if form == "stated" else ratio / k_inf
    return lhs >= rhs, lhs, rhs


def bias_term(full_grad, batch_grad):
    """<full_grad, batch_grad - full_grad> for flat gradient arrays."""
    full = np.asarray(full_grad, dtype=np.float64)
    batch = np.asarray(batch_grad, dtype=np.float64)
    return dot(full, batch - full)


def bias_term_trace(trainer, source, epochs, dataset, max_points=50_000):
    """Per-step bias terms over a training run; returns (steps, epoch_means).

    steps is a list per epoch of b_k values; the full-data gradient is
    recomputed at every step, so datasets above max_points are refused.
    """
    _, extras = run_training(
        trainer, source, epochs,
        bias_dataset=dataset, bias_max_points=max_points,
    )
    return extras["bias_steps"], extras["bias_epoch_means"]


def _phi_window(eps, mu, sigma, target):
    # P(|Y - target| <= eps) for Y ~ N(mu, sigma^2)
    hi = (eps - mu + target) / sigma
    lo = (-eps - mu + target) / sigma
    return float(stats.norm.cdf(hi) - stats.norm.cdf(lo))


def sample_size_bound(eps, p_conf, mode="oned_exact", mu=0.0, sigma=1.0,
                      target=0.0, A=None):
    """Samples needed before some subset lands within eps of a target.

    Models the observable (per-coordinate gradient) as Gaussian and asks
    how many iid draws guarantee, with confidence 1 - p_conf, at least
    one draw within eps of the target.

    modes:
    - oned_exact: n = ln(p) / ln(1 - q), q the exact +-eps window mass
    - oned_smalleps: the small-eps linearization q ~ 2 (eps/sigma) *
      phi((target - mu)/sigma)
    - multivariate: anisotropic Gaussian shaped by matrix A; the bound is
      the worst coordinate after whitening, with the confidence split
      evenly across coordinates. Singular A means some direction of the
      target is unreachable, which is an error, not a large answer.

    Returns the raw bound (a float); callers ceil it to draw.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not 0.0 < p_conf < 1.0:
        raise ValueError(f"p_conf must lie in (0, 1), got {p_conf}")

    def _rail(q, numerator):
        if q >= 1.0:
            return 1.0
        if q <= 0.0:
            return float("inf")
        return numerator / log(1.0 - q)

    if mode == "oned_exact":
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        return _rail(_phi_window(eps, mu, sigma, target), log(p_conf))

    if mode == "oned_smalleps":
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        q = 2.0 * (eps / sigma) * float(stats.norm.pdf((target - mu) / sigma))
        return _rail(min(q, 1.0), log(p_conf))

    if mode == "multivariate":
        if A is None:
            raise ValueError("multivariate mode needs the shaping matrix A")
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        k = A.shape[0]
        mu_v = np.broadcast_to(np.asarray(mu, dtype=np.float64), (k,))
        t_v = np.broadcast_to(np.asarray(target, dtype=np.float64), (k,))
        try:
            c = np.linalg.solve(A, t_v - mu_v)
        except np.linalg.LinAlgError:
            raise NumericError(
                "shaping matrix A is singular: the target gradient cannot be "
                "reconstructed along its null directions"
            ) from None
        norm_a = float(np.linalg.norm(A, 2))
        numerator = log(1.0 - (1.0 - p_conf) ** (1.0 / k))
        worst = 1.0
        for ci in c:
            q = float(stats.norm.cdf(eps / norm_a + ci) - stats.norm.cdf(-eps / norm_a + ci))
            worst = max(worst, _rail(q, numerator))
        return worst

    raise ValueError(f"unknown mode {mode!r}")
