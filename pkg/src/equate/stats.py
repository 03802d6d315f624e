"""Statistical procedures: power-law and Gompertz fitting, OLS residual
diagnostics and language classification, exponential KS testing, PCA with
varimax rotation, and stepwise BIC selection.

All functions are pure; independent fits may run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import (
    DegenerateInput,
    NonPositiveCount,
    NonPositiveValue,
    TooFewPoints,
)
from .model import (
    ExpTestResult,
    GompertzFit,
    LanguageRecord,
    LogLogOlsFit,
    PcaResult,
    PowerLawFit,
    StepwiseResult,
)


@dataclass(frozen=True)
class TimeNormalization:
    mu_t: float
    sigma_t: float

    def apply(self, t):
        return (np.asarray(t, dtype=float) - self.mu_t) / self.sigma_t

    def invert(self, t_norm):
        return np.asarray(t_norm, dtype=float) * self.sigma_t + self.mu_t


# Classification labels, mutually exclusive with precedence
# dead > under_resourced > top5_bin > mid_tier.
CATEGORY_DEAD = "dead"
CATEGORY_UNDER_RESOURCED = "under_resourced"
CATEGORY_TOP5_BIN = "over_resourced_top5_bin"
CATEGORY_MID_TIER = "mid_tier"


def _simple_ols(x: np.ndarray, y: np.ndarray):
    """Slope/intercept OLS of y on x with slope stderr, R2 and residuals."""
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx) if sxx > 0 else 0.0
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    rss = float(np.sum(resid**2))
    sst = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - rss / sst if sst > 0 else 1.0
    if n > 2 and sxx > 0:
        stderr = math.sqrt(rss / (n - 2) / sxx)
    else:
        stderr = float("inf")
    return slope, intercept, stderr, r2, resid


def fit_power_law(counts) -> PowerLawFit:
    """OLS fit of ln(count) on ln(rank) for descending-sorted counts.

    alpha is the negated slope of the log-log line; the rank-frequency
    relation is count(k) ~ C / k^alpha.
    """
    counts = np.asarray(list(counts), dtype=float)
    if counts.size < 3:
        raise TooFewPoints("need at least 3 counts")
    if np.any(counts <= 0):
        raise NonPositiveCount("all counts must be positive")
    x = np.sort(counts)[::-1]
    k = np.arange(1, x.size + 1, dtype=float)
    slope, intercept, stderr, r2, resid = _simple_ols(np.log(k), np.log(x))
    sigma = float(np.std(resid, ddof=1))
    return PowerLawFit(alpha=-slope, log_c=intercept, slope_stderr=stderr, r2=r2, residual_sigma=sigma)


def zipf_residual_sigma(counts) -> float:
    """Residual standard deviation around an ideal slope -1 rank-frequency
    line whose intercept is estimated by least squares."""
    counts = np.asarray(list(counts), dtype=float)
    if counts.size < 3:
        raise TooFewPoints("need at least 3 counts")
    if np.any(counts <= 0):
        raise NonPositiveCount("all counts must be positive")
    x = np.sort(counts)[::-1]
    k = np.arange(1, x.size + 1, dtype=float)
    # ln x = intercept - ln k + e; least-squares intercept is the mean offset
    offset = np.log(x) + np.log(k)
    resid = offset - offset.mean()
    return float(np.std(resid, ddof=1))


def fit_loglog_ols(speakers, model_counts) -> LogLogOlsFit:
    """OLS of log(model count) on log(speakers) over languages with at least
    one model and one speaker.

    Residual arrays are full length and aligned with the inputs; excluded
    points carry NaN. Studentized residuals use the external (leave-one-out)
    variance estimate, with one-sided lower-tail p-values.
    """
    x_all = np.asarray(list(speakers), dtype=float)
    y_all = np.asarray(list(model_counts), dtype=float)
    if x_all.shape != y_all.shape:
        raise ValueError("speakers and model_counts must align")
    mask = (x_all >= 1) & (y_all >= 1)
    x = np.log(x_all[mask])
    y = np.log(y_all[mask])
    n = x.size
    if n < 3:
        raise TooFewPoints("need at least 3 included pairs")
    slope, intercept, _, r2, resid = _simple_ols(x, y)

    # hat values for the simple-regression design [1, x]
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    h = 1.0 / n + (x - xm) ** 2 / sxx
    rss = float(np.sum(resid**2))
    p = 2
    dof = n - p - 1
    if dof <= 0:
        raise TooFewPoints("too few points for studentization")
    s2_loo = (rss - resid**2 / (1.0 - h)) / dof
    s2_loo = np.maximum(s2_loo, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = resid / np.sqrt(s2_loo * (1.0 - h))
    pvals = sps.t.cdf(tstat, df=dof)

    def expand(arr):
        full = np.full(x_all.shape, np.nan)
        full[mask] = arr
        return full

    fit = LogLogOlsFit(
        beta0=intercept,
        beta1=slope,
        r2=r2,
        residuals=expand(resid),
        studentized_residuals=expand(tstat),
        p_values=expand(pvals),
    )
    fit.included = mask  # alignment mask for downstream classification
    return fit


def _speaker_bin(n_speakers: int) -> int:
    """Base-10 decade bin of the speaker count; zero speakers get bin -1."""
    if n_speakers <= 0:
        return -1
    return int(math.floor(math.log10(n_speakers)))


def classify_languages(
    fit: LogLogOlsFit,
    records: list[LanguageRecord],
    model_counts,
    p_threshold: float = 0.05,
    min_speakers: int = 1_000_000,
    top_n: int = 5,
) -> dict[str, str]:
    """Partition languages into the four scatter-plot categories.

    Precedence: dead > under_resourced > top-5-per-bin > mid_tier.
    Under-resourced means a one-sided studentized-residual p-value below
    ``p_threshold`` (below the line) with more than ``min_speakers`` speakers.
    """
    counts = np.asarray(list(model_counts), dtype=float)
    if len(records) != counts.size or counts.size != fit.p_values.size:
        raise ValueError("records, model_counts and fit must align")

    # top-N model counts within each speaker decade bin
    by_bin: dict[int, list[int]] = {}
    for i, rec in enumerate(records):
        by_bin.setdefault(_speaker_bin(rec.n_speakers), []).append(i)
    top5 = set()
    for members in by_bin.values():
        ranked = sorted(
            members, key=lambda i: (-counts[i], -records[i].n_speakers, records[i].glottocode)
        )
        top5.update(ranked[:top_n])

    out = {}
    for i, rec in enumerate(records):
        p = fit.p_values[i]
        if rec.is_dead:
            cat = CATEGORY_DEAD
        elif not np.isnan(p) and p < p_threshold and rec.n_speakers > min_speakers:
            cat = CATEGORY_UNDER_RESOURCED
        elif i in top5:
            cat = CATEGORY_TOP5_BIN
        else:
            cat = CATEGORY_MID_TIER
        out[rec.glottocode] = cat
    return out


def normalize_time(timestamps) -> tuple[np.ndarray, TimeNormalization]:
    """Z-score the time axis (sample standard deviation)."""
    t = np.asarray(list(timestamps), dtype=float)
    if t.size < 2 or np.all(t == t[0]):
        raise DegenerateInput("need at least 2 distinct timestamps")
    mu = float(t.mean())
    sigma = float(np.std(t, ddof=1))
    return (t - mu) / sigma, TimeNormalization(mu_t=mu, sigma_t=sigma)


def _gompertz(t, a, b, c):
    return a * np.exp(-b * np.exp(-c * t))


def fit_gompertz(t_norm, s, max_iter: int = 500, tol: float = 1e-10) -> GompertzFit:
    """Nonlinear least squares for s ~ A exp(-B exp(-C t)).

    Damped Gauss-Newton with analytic Jacobian; A is projected onto
    [max(s), inf) every step so the asymptote never falls below the data.
    """
    t = np.asarray(list(t_norm), dtype=float)
    s = np.asarray(list(s), dtype=float)
    if t.size != s.size:
        raise ValueError("t and s must align")
    if t.size < 4:
        raise TooFewPoints("need at least 4 points")
    if np.any(s < 0):
        raise NonPositiveValue("totals must be nonnegative")
    smax = float(s.max())
    if smax <= 0:
        raise DegenerateInput("all totals are zero")

    a = 1.05 * smax
    # C0 from the slope of the linearized transform, B0 from the first
    # usable point: -ln(s/A) = B exp(-C t).
    inner = s / a
    ok = (inner > 0) & (inner < 1)
    yl = -np.log(-np.log(inner[ok]))
    if ok.sum() >= 2:
        c0, _, _, _, _ = _simple_ols(t[ok], yl)
        c = max(c0, 1e-3)
    else:
        c = 1.0
    i0 = int(np.argmax(ok)) if ok.any() else 0
    if ok.any():
        b = max(-math.log(s[i0] / a) * math.exp(c * t[i0]), 1e-8)
    else:
        b = 1.0

    params = np.array([a, b, c])
    lam = 1e-3
    resid = s - _gompertz(t, *params)
    cost = float(resid @ resid)
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        a, b, c = params
        e = np.exp(-c * t)
        u = np.exp(-b * e)
        J = np.column_stack([u, -a * e * u, a * b * t * e * u])
        g = J.T @ resid
        JtJ = J.T @ J
        step_taken = False
        for _ in range(50):
            try:
                delta = np.linalg.solve(JtJ + lam * np.diag(np.diag(JtJ)), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = params + delta
            trial[0] = max(trial[0], smax)  # asymptote projection
            trial[1] = max(trial[1], 1e-12)
            trial[2] = max(trial[2], 1e-12)
            trial_resid = s - _gompertz(t, *trial)
            trial_cost = float(trial_resid @ trial_resid)
            if np.isfinite(trial_cost) and trial_cost <= cost:
                rel = float(np.max(np.abs(trial - params) / np.maximum(np.abs(params), 1e-12)))
                params, resid, cost = trial, trial_resid, trial_cost
                lam = max(lam / 3, 1e-12)
                step_taken = True
                if rel < tol:
                    converged = True
                break
            lam *= 10
        if converged:
            break
        if not step_taken:
            # stalled at a stationary point of the damped iteration
            converged = float(np.max(np.abs(g))) <= 1e-6 * max(cost, 1.0)
            break

    sst = float(np.sum((s - s.mean()) ** 2))
    r2 = 1.0 - cost / sst if sst > 0 else 1.0
    return GompertzFit(
        A=float(params[0]),
        B=float(params[1]),
        C=float(params[2]),
        r2=r2,
        iterations=iterations,
        converged=bool(converged),
    )


def linearize_gompertz(fit: GompertzFit, t, s):
    """Map totals through y' = -ln(-ln(s/A)); exact Gompertz data becomes the
    line y' = C t - ln B. Points outside (0, A) are dropped and counted."""
    t = np.asarray(list(t), dtype=float)
    s = np.asarray(list(s), dtype=float)
    points = []
    excluded = 0
    for ti, si in zip(t, s):
        if 0 < si < fit.A:
            points.append((float(ti), float(-math.log(-math.log(si / fit.A)))))
        else:
            excluded += 1
    return points, excluded


# critical-value coefficient for the asymptotic one-sample KS test
def _ks_critical_coefficient(alpha: float) -> float:
    return math.sqrt(-0.5 * math.log(alpha / 2.0))


def ks_exponential_test(values, alpha: float = 0.05) -> ExpTestResult:
    """One-sample KS test of the values against Exp(lambda_hat = 1/mean).

    reject=False signals exponential-like behavior. Uses the asymptotic
    critical value; no small-sample or estimated-parameter correction.
    """
    v = np.sort(np.asarray(list(values), dtype=float))
    if v.size < 5:
        raise TooFewPoints("need at least 5 values")
    if np.any(v <= 0):
        raise NonPositiveValue("values must be positive")
    n = v.size
    lam = 1.0 / float(v.mean())
    cdf = 1.0 - np.exp(-lam * v)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    crit = _ks_critical_coefficient(alpha) / math.sqrt(n)
    return ExpTestResult(lambda_hat=lam, ks_statistic=d, reject=d > crit)


def _varimax_rotation(loadings: np.ndarray, tol: float = 1e-12, max_iter: int = 1000) -> np.ndarray:
    """Orthogonal rotation maximizing the varimax criterion.

    Pairwise (planar) rotations with the closed-form optimal angle per
    column pair, swept until no pair moves; this reaches the optimum where
    gradient-style fixed-point schemes can stall on symmetric inputs.
    """
    p, k = loadings.shape
    R = np.eye(k)
    L = loadings.copy()
    for _ in range(max_iter):
        max_angle = 0.0
        for j in range(k - 1):
            for l in range(j + 1, k):
                u = L[:, j] ** 2 - L[:, l] ** 2
                v = 2.0 * L[:, j] * L[:, l]
                num = 2.0 * (u @ v - u.sum() * v.sum() / p)
                den = (u @ u - v @ v) - (u.sum() ** 2 - v.sum() ** 2) / p
                phi = 0.25 * math.atan2(num, den)
                if abs(phi) <= tol:
                    continue
                max_angle = max(max_angle, abs(phi))
                c, s = math.cos(phi), math.sin(phi)
                G = np.array([[c, -s], [s, c]])
                L[:, [j, l]] = L[:, [j, l]] @ G
                R[:, [j, l]] = R[:, [j, l]] @ G
        if max_angle <= tol:
            break
    return R


def varimax_criterion(L: np.ndarray) -> float:
    """Sum over factors of the variance of squared loadings."""
    sq = L**2
    return float(np.sum(sq**2) - np.sum(sq, axis=0) @ np.sum(sq, axis=0) / L.shape[0])


def pca_varimax(matrix, n_components: int = 2) -> PcaResult:
    """PCA on the correlation matrix followed by varimax rotation with
    Kaiser normalization.

    Loadings are eigenvectors scaled by sqrt(eigenvalue); the explained
    variance ratio is reported pre-rotation. Each rotated column is signed
    so its largest-magnitude entry is positive.
    """
    X = np.asarray(matrix, dtype=float)
    n, p = X.shape
    if not 1 <= n_components <= min(n, p):
        raise ValueError("invalid n_components")
    sd = X.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise DegenerateInput("constant column in PCA input")
    Z = (X - X.mean(axis=0)) / sd
    corr = (Z.T @ Z) / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(corr)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]
    ratio = eigvals / eigvals.sum()

    loadings = eigvecs[:, :n_components] * np.sqrt(eigvals[:n_components])

    # Kaiser normalization: rotate row-normalized loadings
    h = np.sqrt(np.sum(loadings**2, axis=1))
    h_safe = np.where(h > 0, h, 1.0)
    R = _varimax_rotation(loadings / h_safe[:, None])
    rotated = (loadings / h_safe[:, None]) @ R * h_safe[:, None]

    # sign convention: dominant entry of each rotated column positive
    for j in range(rotated.shape[1]):
        imax = int(np.argmax(np.abs(rotated[:, j])))
        if rotated[imax, j] < 0:
            rotated[:, j] = -rotated[:, j]
            R[:, j] = -R[:, j]
    return PcaResult(
        loadings=loadings,
        rotated_loadings=rotated,
        explained_variance_ratio=ratio[:n_components],
        rotation=R,
    )


def _bic(rss: float, n: int, p: int) -> float:
    rss = max(rss, 1e-300)
    return n * math.log(rss / n) + p * math.log(n)


def _ols_fit(X: np.ndarray, y: np.ndarray):
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        return None
    resid = y - X @ coef
    return coef, float(resid @ resid)


def stepwise_select(
    y,
    candidates: dict[str, np.ndarray],
    group_dummies: dict[str, np.ndarray] | None = None,
) -> StepwiseResult:
    """Forward-backward greedy selection under BIC = n ln(RSS/n) + p ln(n).

    The intercept and any group dummies are always retained. Each round
    evaluates every single addition and removal and applies the best
    BIC-improving change; candidates producing a rank-deficient design are
    skipped and recorded.
    """
    y = np.asarray(list(y), dtype=float)
    n = y.size
    names = list(candidates)
    cols = {k: np.asarray(v, dtype=float) for k, v in candidates.items()}
    base_cols = [np.ones(n)]
    base_names = ["(intercept)"]
    for gname, col in (group_dummies or {}).items():
        base_cols.append(np.asarray(col, dtype=float))
        base_names.append(gname)
    skipped: list[str] = []

    def design(selected):
        return np.column_stack(base_cols + [cols[k] for k in selected])

    def bic_of(selected):
        X = design(selected)
        fit = _ols_fit(X, y)
        if fit is None:
            return None, None
        _, rss = fit
        return _bic(rss, n, X.shape[1]), fit

    selected: list[str] = []
    current_bic, current_fit = bic_of(selected)
    if current_bic is None:
        raise np.linalg.LinAlgError("base design is rank-deficient")
    trace = [current_bic]

    while True:
        best = None  # (bic, kind, name)
        for name in names:
            if name in selected:
                continue
            b, _ = bic_of(selected + [name])
            if b is None:
                if name not in skipped:
                    skipped.append(name)
                continue
            if best is None or b < best[0]:
                best = (b, "add", name)
        for name in selected:
            b, _ = bic_of([k for k in selected if k != name])
            if b is not None and (best is None or b < best[0]):
                best = (b, "drop", name)
        if best is None or best[0] >= current_bic:
            break
        _, kind, name = best
        if kind == "add":
            selected.append(name)
        else:
            selected.remove(name)
        current_bic, current_fit = bic_of(selected)
        trace.append(current_bic)

    X = design(selected)
    coef, rss = current_fit
    p = X.shape[1]
    dof = max(n - p, 1)
    sigma2 = rss / dof
    xtx_inv = np.linalg.pinv(X.T @ X)
    se = np.sqrt(np.maximum(np.diag(xtx_inv) * sigma2, 0.0))
    all_names = base_names + selected
    return StepwiseResult(
        selected_features=list(selected),
        coefficients={k: float(c) for k, c in zip(all_names, coef)},
        stderrs={k: float(s) for k, s in zip(all_names, se)},
        bic_trace=trace,
        skipped_singular=skipped,
    )
