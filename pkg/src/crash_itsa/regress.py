"""Least squares, IRLS logistic regression, and regression with AR(p) errors.

The AR estimator is iterated feasible GLS: OLS for the coefficients,
Yule-Walker for the AR parameters on the structural residuals, then
OLS on the quasi-differenced data, repeated to convergence. The first
``p`` observations are dropped from the whitened regression.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import linalg, stats
from scipy.special import expit

from .exceptions import FitError, InputError, NonStationaryError, RankDeficiencyError, SeparationError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class DesignMatrix:
    """Named regressors, with an optional fixed offset (coefficient 1)."""

    values: np.ndarray
    names: tuple[str, ...]
    offset: np.ndarray | None = None

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[0] == 1 and len(self.names) != 1:
            values = values.T
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise InputError(f"duplicate column names in design: {self.names}")
        if values.shape[1] != len(self.names):
            raise InputError(f"{values.shape[1]} columns but {len(self.names)} names")
        if self.offset is not None:
            off = np.asarray(self.offset, dtype=float)
            if off.shape != (values.shape[0],):
                raise InputError("offset length does not match design rows")
            object.__setattr__(self, "offset", off)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def drop(self, names: Sequence[str]) -> "DesignMatrix":
        keep = [i for i, n in enumerate(self.names) if n not in set(names)]
        return DesignMatrix(self.values[:, keep], tuple(self.names[i] for i in keep), self.offset)


def as_design(X, names: Sequence[str] | None = None) -> DesignMatrix:
    if isinstance(X, DesignMatrix):
        return X
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if names is None:
        names = [f"x{i}" for i in range(X.shape[1])]
    return DesignMatrix(X, tuple(names))


def check_rank(X: np.ndarray, names: Sequence[str], tol: float = RANK_TOL) -> None:
    """Raise :class:`RankDeficiencyError` naming a dependent column.

    Uses column-pivoted QR; a diagonal entry of R below ``tol * |R[0, 0]|``
    marks rank deficiency. The column reported is the first pivoted column
    beyond the numerical rank.
    """
    n, k = X.shape
    if k == 0:
        return
    if n < k:
        raise RankDeficiencyError(names[n] if n < len(names) else names[-1])
    # equilibrate so the tolerance is independent of column scaling
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        raise RankDeficiencyError(names[int(np.flatnonzero(norms == 0)[0])])
    _, r, piv = linalg.qr(X / norms, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > tol * d[0]))
    if rank < k:
        raise RankDeficiencyError(names[piv[rank]])


@dataclass
class ArFitResult:
    """Regression with AR(p) errors (p = 0 is plain OLS).

    ``resid`` are the structural residuals y - X b; ``whitened_resid`` are
    the innovation estimates from the quasi-differenced regression and have
    ``n - p`` entries.
    """

    names: tuple[str, ...]
    coef: np.ndarray
    cov: np.ndarray
    ar_params: np.ndarray
    sigma2: float
    loglik: float
    dof: int
    resid: np.ndarray
    whitened_resid: np.ndarray
    fitted: np.ndarray
    y: np.ndarray = field(repr=False)
    n_iter: int = 0
    converged: bool = True
    segments: tuple[int, ...] | None = None

    @property
    def p(self) -> int:
        return len(self.ar_params)

    @property
    def nobs(self) -> int:
        return len(self.y)

    @property
    def n_params(self) -> int:
        return len(self.coef) + self.p

    @property
    def bse(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @property
    def tvalues(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef / self.bse

    @property
    def pvalues(self) -> np.ndarray:
        return 2.0 * stats.t.sf(np.abs(self.tvalues), self.dof)

    def conf_int(self, alpha: float = 0.05) -> np.ndarray:
        q = stats.t.ppf(1.0 - alpha / 2.0, self.dof)
        half = q * self.bse
        return np.column_stack([self.coef - half, self.coef + half])

    def params(self) -> dict[str, float]:
        return dict(zip(self.names, self.coef.tolist()))

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coef


@dataclass
class LogitFitResult:
    names: tuple[str, ...]
    coef: np.ndarray
    cov: np.ndarray
    loglik: float
    n_iter: int
    converged: bool

    @property
    def usable(self) -> bool:
        return self.converged

    @property
    def bse(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def linear_predictor(self, X, offset=None) -> np.ndarray:
        eta = np.asarray(X, dtype=float) @ self.coef
        return eta if offset is None else eta + offset

    def predict(self, X, offset=None) -> np.ndarray:
        return expit(self.linear_predictor(X, offset))


def _ols_core(X: np.ndarray, y: np.ndarray):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    return beta, resid


def _xtx_inv(X: np.ndarray) -> np.ndarray:
    # R from QR is better conditioned than forming X'X directly
    r = np.linalg.qr(X, mode="r")
    rinv = linalg.solve_triangular(r, np.eye(r.shape[0]))
    cov = rinv @ rinv.T
    return 0.5 * (cov + cov.T)


def _gaussian_loglik(ssr: float, n: int) -> float:
    if ssr <= 0.0:
        return float("inf")  # exact fit
    return -0.5 * n * (np.log(2.0 * np.pi * ssr / n) + 1.0)


def ols(X, y, names: Sequence[str] | None = None) -> ArFitResult:
    """Ordinary least squares with classical (homoskedastic) covariance."""
    return fit_ar(X, y, 0, names=names)


def yule_walker(x, order: int, segments: Sequence[int] | None = None) -> np.ndarray:
    """Yule-Walker AR coefficients from biased autocovariances (no demeaning).

    Regression residuals are mean zero by model, so the series is used as
    is. With ``segments`` the autocovariances are pooled over consecutive
    blocks of the given lengths without crossing block boundaries.
    Returns an empty array for ``order == 0``.
    """
    x = np.asarray(x, dtype=float)
    if order == 0:
        return np.empty(0)
    parts = _split(x, segments)
    n = x.size
    r = np.array([sum(float(b[: b.size - k] @ b[k:]) for b in parts) for k in range(order + 1)]) / n
    if r[0] <= 0:
        raise FitError("cannot estimate AR parameters from zero residuals")
    return linalg.solve_toeplitz(r[:-1], r[1:])


def _split(a: np.ndarray, segments: Sequence[int] | None) -> list[np.ndarray]:
    if segments is None:
        return [a]
    edges = np.cumsum([0, *segments])
    return [a[edges[i] : edges[i + 1]] for i in range(len(segments))]


def is_stationary(phi) -> bool:
    """True when all roots of 1 - phi_1 z - ... - phi_p z^p lie outside the unit circle."""
    phi = np.asarray(phi, dtype=float)
    if phi.size == 0:
        return True
    companion = np.zeros((phi.size, phi.size))
    companion[0] = phi
    companion[1:, :-1] = np.eye(phi.size - 1)
    return float(np.max(np.abs(np.linalg.eigvals(companion)))) < 1.0


def quasi_difference(a: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """a_t - sum_i phi_i a_{t-i} for t = p .. n-1 (rows)."""
    p = phi.size
    out = a[p:].copy()
    for i, ph in enumerate(phi, start=1):
        out -= ph * a[p - i : a.shape[0] - i]
    return out


def _qd_blocks(a: np.ndarray, phi: np.ndarray, segments) -> np.ndarray:
    parts = [quasi_difference(b, phi) for b in _split(a, segments)]
    return np.concatenate(parts, axis=0)


def ar_autocov_matrix(phi: np.ndarray) -> np.ndarray:
    """p x p autocovariance matrix of a unit-innovation-variance AR(p) process."""
    p = phi.size
    if p == 0:
        return np.empty((0, 0))
    # solve for gamma_0..gamma_p from the Yule-Walker equations
    a = np.zeros((p + 1, p + 1))
    b = np.zeros(p + 1)
    b[0] = 1.0
    for k in range(p + 1):
        a[k, k] += 1.0
        for i in range(1, p + 1):
            a[k, abs(k - i)] -= phi[i - 1]
    gamma = np.linalg.solve(a, b)
    return linalg.toeplitz(gamma[:p])


def exact_loglik(resid: np.ndarray, phi: np.ndarray) -> float:
    """Gaussian log-likelihood of AR(p) errors, sigma^2 profiled out.

    The first ``p`` residuals enter through their stationary covariance, the
    rest through the innovations, so fits of different order are compared
    on the same ``n`` observations.
    """
    n, p = resid.size, phi.size
    innov = quasi_difference(resid, phi)
    q = float(innov @ innov)
    logdet = 0.0
    if p:
        g = ar_autocov_matrix(phi)
        c, low = linalg.cho_factor(g)
        head = resid[:p]
        q += float(head @ linalg.cho_solve((c, low), head))
        logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    return -0.5 * n * (np.log(2.0 * np.pi * q / n) + 1.0) - 0.5 * logdet


def fit_ar(
    X,
    y,
    p: int,
    names: Sequence[str] | None = None,
    tol: float = 1e-8,
    max_iter: int = 50,
    phi: Sequence[float] | None = None,
    segments: Sequence[int] | None = None,
) -> ArFitResult:
    """Linear regression with AR(p) errors by iterated feasible GLS.

    Parameters
    ----------
    X : DesignMatrix or array_like, shape (n, k)
    y : array_like, shape (n,)
    p : int
        AR order; 0 gives OLS.
    tol, max_iter : float, int
        Stop when ``max |delta beta| < tol`` or after ``max_iter`` updates.
    phi : sequence of float, optional
        Hold the AR parameters fixed instead of estimating them.
    segments : sequence of int, optional
        Lengths of consecutive independent series stacked in ``y`` (e.g.
        treated and control groups). They share one AR process, but lags
        never reach across a boundary and each block loses its first ``p``
        rows in the whitened regression.

    Returns
    -------
    ArFitResult
        Inference (standard errors, t-based intervals and p-values) comes
        from the final whitened regression with ``n - p * blocks - k``
        degrees of freedom. ``converged`` is False if the iteration limit
        was hit.
    """
    design = as_design(X, names)
    Xv = design.values
    y = np.asarray(y, dtype=float)
    n, k = Xv.shape
    if y.shape != (n,):
        raise InputError(f"y has shape {y.shape}, expected ({n},)")
    if p < 0:
        raise InputError("AR order must be >= 0")
    if segments is not None and sum(segments) != n:
        raise InputError("segment lengths must sum to the number of rows")
    if phi is not None:
        phi = np.asarray(phi, dtype=float)
        p = phi.size
    n_blocks = 1 if segments is None else len(segments)
    if segments is not None and min(segments) <= p:
        raise InputError("every segment must be longer than the AR order")
    if n <= k + p * n_blocks:
        raise InputError(f"need more than {k + p * n_blocks} observations, got {n}")
    check_rank(Xv, design.names)

    beta, resid = _ols_core(Xv, y)
    fixed = phi is not None
    phi_hat = phi if fixed else np.empty(0)
    n_iter, converged = 0, True
    if p:
        converged = False
        for n_iter in range(1, max_iter + 1):
            if not fixed:
                phi_hat = yule_walker(resid, p, segments)
            if not is_stationary(phi_hat):
                raise NonStationaryError(
                    f"AR({p}) estimate {np.round(phi_hat, 4).tolist()} is not stationary; try a lower order"
                )
            Xw = _qd_blocks(Xv, phi_hat, segments)
            yw = _qd_blocks(y, phi_hat, segments)
            check_rank(Xw, design.names)
            new_beta, _ = _ols_core(Xw, yw)
            delta = np.max(np.abs(new_beta - beta))
            beta = new_beta
            resid = y - Xv @ beta
            if fixed or delta < tol:
                converged = True
                break
        Xw = _qd_blocks(Xv, phi_hat, segments)
        white = _qd_blocks(y, phi_hat, segments) - Xw @ beta
    else:
        Xw, white = Xv, resid

    dof = white.size - k
    ssr = float(white @ white)
    sigma2 = ssr / dof
    cov = sigma2 * _xtx_inv(Xw)
    if p:
        loglik = sum(exact_loglik(b, phi_hat) for b in _split(resid, segments))
    else:
        loglik = _gaussian_loglik(ssr, n)
    return ArFitResult(
        names=design.names,
        coef=beta,
        cov=cov,
        ar_params=np.asarray(phi_hat, dtype=float),
        sigma2=sigma2,
        loglik=loglik,
        dof=dof,
        resid=resid,
        whitened_resid=white,
        fitted=Xv @ beta,
        y=y,
        n_iter=n_iter,
        converged=converged,
        segments=None if segments is None else tuple(int(s) for s in segments),
    )


class AnovaResult(NamedTuple):
    statistic: float
    dof: int
    pvalue: float


def anova_compare(fit_a: ArFitResult, fit_b: ArFitResult) -> AnovaResult:
    """Likelihood-ratio comparison of two nested fits of the same outcome.

    The smaller model may be passed in either position. The statistic is
    ``2 * (loglik_large - loglik_small)`` referred to a chi-square with the
    difference in ``len(coef) + p`` as degrees of freedom.
    """
    if fit_a.y.shape != fit_b.y.shape or not np.array_equal(fit_a.y, fit_b.y):
        raise InputError("anova_compare needs fits of the same outcome vector")
    small, large = (fit_a, fit_b) if fit_a.n_params <= fit_b.n_params else (fit_b, fit_a)
    if not set(small.names) <= set(large.names) or small.p > large.p:
        raise InputError("fits are not nested (regressors or AR order)")
    dof = large.n_params - small.n_params
    stat = 2.0 * (large.loglik - small.loglik)
    if dof == 0:
        return AnovaResult(stat, 0, 1.0)
    return AnovaResult(stat, dof, float(stats.chi2.sf(max(stat, 0.0), dof)))


def fit_logit(
    X,
    y,
    offset=None,
    names: Sequence[str] | None = None,
    tol: float = 1e-10,
    max_iter: int = 100,
    eta_limit: float = 50.0,
) -> LogitFitResult:
    """Maximum-likelihood logistic regression by IRLS.

    Converges when ``max |delta beta| < tol``. A linear predictor exceeding
    ``eta_limit`` in magnitude is treated as divergence towards perfect
    separation and raises :class:`SeparationError`.
    """
    design = as_design(X, names)
    Xv = design.values
    y = np.asarray(y, dtype=float)
    n, k = Xv.shape
    if y.shape != (n,):
        raise InputError("y length does not match design rows")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("logit outcome must be 0/1")
    if y.min() == y.max():
        raise InputError("logit outcome has a single class")
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if design.offset is not None and offset is None:
        off = design.offset
    check_rank(Xv, design.names)

    beta = np.zeros(k)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        eta = Xv @ beta + off
        mu = expit(eta)
        # product form stays positive where 1 - mu rounds to 0
        w = mu * expit(-eta)
        z = eta - off + (y - mu) / w
        sw = np.sqrt(w)
        new_beta, *_ = np.linalg.lstsq(Xv * sw[:, None], z * sw, rcond=None)
        delta = np.max(np.abs(new_beta - beta))
        beta = new_beta
        if np.max(np.abs(Xv @ beta + off)) > eta_limit:
            raise SeparationError(
                "logistic fit diverges (perfect or quasi-complete separation); reduce the covariate set"
            )
        if delta < tol:
            converged = True
            break
    eta = Xv @ beta + off
    mu = expit(eta)
    w = mu * expit(-eta)
    cov = _xtx_inv(Xv * np.sqrt(w)[:, None])
    loglik = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    return LogitFitResult(design.names, beta, cov, loglik, n_iter, converged)
