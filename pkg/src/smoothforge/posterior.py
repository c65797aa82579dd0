"""Posterior reduction: coefficient summaries, effective degrees of freedom,
prediction matrices, two-standard-error bands and posterior curve draws."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .assemble import Prefit, penalty_matrix
from .errors import DataError, ProprietyError, SchemaError
from .formula import Family
from .sampler import SampleStore

SUMMARY_TAG = "smoothforge-summary-v1"
BAND_MULT = 2.0


class EdfMethod(enum.Enum):
    PENALTY = "penalty"
    VBETA = "vbeta"


@dataclass
class PosteriorSummary:
    b_hat: np.ndarray
    V_beta: np.ndarray
    rho_stats: dict[str, np.ndarray]
    scale_hat: float | None
    edf_total: float
    edf_term: dict[str, float]
    edf_method: EdfMethod
    n_draws: int = 0
    lambda_bar: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": SUMMARY_TAG,
            "n_draws": self.n_draws,
            "b_hat": self.b_hat.tolist(),
            "V_beta": self.V_beta.tolist(),
            "rho_stats": {k: np.asarray(v).tolist() for k, v in self.rho_stats.items()},
            "lambda_bar": None if self.lambda_bar is None else self.lambda_bar.tolist(),
            "scale_hat": self.scale_hat,
            "edf_method": self.edf_method.value,
            "edf_total": self.edf_total,
            "edf_term": self.edf_term,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorSummary":
        if d.get("format") != SUMMARY_TAG:
            raise SchemaError(f"not a summary file (format {d.get('format')!r})")
        return cls(
            b_hat=np.asarray(d["b_hat"], dtype=float),
            V_beta=np.asarray(d["V_beta"], dtype=float),
            rho_stats={k: np.asarray(v, dtype=float) for k, v in d["rho_stats"].items()},
            scale_hat=d["scale_hat"],
            edf_total=float(d["edf_total"]),
            edf_term={k: float(v) for k, v in d["edf_term"].items()},
            edf_method=EdfMethod(d["edf_method"]),
            n_draws=int(d["n_draws"]),
            lambda_bar=None if d["lambda_bar"] is None else np.asarray(d["lambda_bar"], dtype=float),
        )


def save_summary(summary: PosteriorSummary, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_summary(path: str | Path) -> PosteriorSummary:
    return PosteriorSummary.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# effective degrees of freedom


def _partial_traces(prefit: Prefit, diagF: np.ndarray) -> tuple[float, dict[str, float]]:
    terms = {t.label: float(diagF[prefit.term_slice(t)].sum()) for t in prefit.terms}
    return float(diagF.sum()), terms


def _xtwx(prefit: Prefit, W) -> np.ndarray:
    W = np.ones(prefit.n) if W is None else np.asarray(W, dtype=float)
    if W.ndim != 1 or W.shape[0] != prefit.n or np.any(W < 0):
        raise ValueError("W must be a non-negative vector with one weight per row")
    return prefit.X.T @ (W[:, None] * prefit.X)


def edf_penalty(prefit: Prefit, lambda_bar, W=None) -> tuple[float, dict[str, float]]:
    """Trace of F = (X'WX + sum lambda_j S_j)^-1 X'WX, total and per smooth."""
    lambda_bar = np.asarray(lambda_bar, dtype=float)
    if np.any(lambda_bar <= 0):
        raise ValueError("smoothing parameters must be strictly positive")
    XWX = _xtwx(prefit, W)
    A = XWX + penalty_matrix(prefit, lambda_bar)
    try:
        F = np.linalg.solve(A, XWX)
    except np.linalg.LinAlgError:
        raise ProprietyError("X'WX + penalty is singular") from None
    return _partial_traces(prefit, np.diag(F))


def edf_vbeta(prefit: Prefit, V_beta, W=None, phi: float = 1.0) -> tuple[float, dict[str, float]]:
    """Trace of F = V_beta X'WX / phi, total and per smooth."""
    if not phi > 0:
        raise ValueError("phi must be positive")
    F = np.asarray(V_beta, dtype=float) @ _xtwx(prefit, W) / phi
    return _partial_traces(prefit, np.diag(F))


def irls_weights_at(prefit: Prefit, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    return prefit.family.irls_weights(mu, prefit.w)


# ---------------------------------------------------------------------------


def _check_b(store: SampleStore, prefit: Prefit) -> np.ndarray:
    if "b" not in store.draws:
        raise SchemaError("samples do not contain b")
    B = store.draws["b"]
    if B.shape[1] != prefit.p:
        raise SchemaError(f"samples have {B.shape[1]} b columns but the prefit has p={prefit.p}")
    if B.shape[0] == 0:
        raise SchemaError("samples contain no draws")
    return B


def summarize(store: SampleStore, prefit: Prefit, edf_method: EdfMethod | str = EdfMethod.PENALTY) -> PosteriorSummary:
    """Posterior mean/covariance of b, smoothing parameter statistics and EDF.

    The PENALTY method evaluates F at lambda_bar = exp(posterior mean of rho);
    the VBETA method uses the draws' covariance and needs ``scale`` (for
    families with a scale parameter) and ``mu`` (for non-gaussian families).
    """
    method = EdfMethod(edf_method)
    B = _check_b(store, prefit)
    # shifting by the first draw keeps a constant chain exact
    D = B - B[0]
    b_hat = B[0] + D.mean(axis=0)
    if B.shape[0] > 1:
        D = D - D.mean(axis=0)
        V = (D.T @ D) / (B.shape[0] - 1)
    else:
        V = np.zeros((prefit.p, prefit.p))

    rho_stats: dict[str, np.ndarray] = {}
    lambda_bar = None
    if prefit.sp_count:
        if "rho" in store.draws:
            R = store.draws["rho"]
            if R.shape[1] != prefit.sp_count:
                raise SchemaError(
                    f"samples have {R.shape[1]} rho columns but the prefit has {prefit.sp_count} smoothing parameters"
                )
            rho_stats = {
                "mean": R.mean(axis=0),
                "sd": R.std(axis=0, ddof=1) if R.shape[0] > 1 else np.zeros(R.shape[1]),
                "q2.5": np.quantile(R, 0.025, axis=0),
                "q50": np.quantile(R, 0.5, axis=0),
                "q97.5": np.quantile(R, 0.975, axis=0),
            }
            lambda_bar = np.exp(rho_stats["mean"])

    fam = prefit.family
    scale_hat = float(store.draws["scale"].mean()) if "scale" in store.draws else None
    mu_hat = store.draws["mu"].mean(axis=0) if "mu" in store.draws else None
    if mu_hat is not None and mu_hat.shape[0] != prefit.n:
        raise SchemaError(f"samples have {mu_hat.shape[0]} mu columns but the prefit has n={prefit.n}")

    if fam.family is Family.GAUSSIAN:
        W = prefit.w.copy()
    elif mu_hat is not None:
        W = irls_weights_at(prefit, mu_hat)
    elif method is EdfMethod.VBETA:
        raise SchemaError("VBETA EDF for a non-gaussian family needs monitored mu")
    else:
        W = irls_weights_at(prefit, fam.linkinv(prefit.X @ b_hat))

    if method is EdfMethod.PENALTY:
        if prefit.sp_count and lambda_bar is None:
            raise SchemaError("PENALTY EDF needs monitored rho (or lambda)")
        total, per = edf_penalty(prefit, lambda_bar if lambda_bar is not None else np.empty(0), W)
    else:
        if fam.has_scale:
            if scale_hat is None:
                raise SchemaError("VBETA EDF needs monitored scale")
            phi = scale_hat
        else:
            phi = 1.0
        total, per = edf_vbeta(prefit, V, W, phi)

    return PosteriorSummary(
        b_hat=b_hat,
        V_beta=V,
        rho_stats=rho_stats,
        scale_hat=scale_hat,
        edf_total=total,
        edf_term=per,
        edf_method=method,
        n_draws=B.shape[0],
        lambda_bar=lambda_bar,
    )


# ---------------------------------------------------------------------------
# prediction


def _newdata_column(newdata: Mapping[str, np.ndarray], name: str) -> np.ndarray:
    if name not in newdata:
        raise DataError(f"variable {name} not found in new data")
    col = np.asarray(newdata[name], dtype=float).reshape(-1)
    if not np.all(np.isfinite(col)):
        raise DataError(f"new data column {name!r} has missing or non-finite values")
    return col


def predict_lp_matrix(prefit: Prefit, newdata: Mapping[str, np.ndarray], clamp: bool = True) -> np.ndarray:
    """Linear predictor matrix Xp with Xp @ b the linear predictor at ``newdata``."""
    needed = list(prefit.parametric) + [v for t in prefit.terms for v in t.variables]
    cols = {name: _newdata_column(newdata, name) for name in dict.fromkeys(needed)}
    lengths = {len(c) for c in cols.values()}
    if len(lengths) > 1:
        raise DataError("new data columns differ in length")
    m = lengths.pop() if lengths else len(next(iter(newdata.values())))
    blocks = [np.ones((m, 1))]
    blocks += [cols[name][:, None] for name in prefit.parametric]
    for t in prefit.terms:
        blocks.append(t.predict_matrix([cols[v] for v in t.variables], clamp=clamp))
    return np.hstack(blocks)


def thinned_indices(n_stored: int, n_draws: int) -> np.ndarray:
    """Evenly spaced draw indices (0-based): for 1000 stored and 20 wanted, 49, 99, ..., 999."""
    if n_draws > n_stored:
        raise DataError(f"{n_draws} curve draws requested but only {n_stored} stored")
    return (np.arange(1, n_draws + 1) * n_stored) // n_draws - 1


@dataclass
class PredictionTable:
    header: list[str]
    columns: list[np.ndarray]

    def column(self, name: str) -> np.ndarray:
        return self.columns[self.header.index(name)]


def _se(Xp: np.ndarray, V: np.ndarray) -> np.ndarray:
    var = np.einsum("ij,jk,ik->i", Xp, V, Xp)
    return np.sqrt(np.maximum(var, 0.0))


def predict(
    prefit: Prefit,
    summary: PosteriorSummary,
    newdata: Mapping[str, np.ndarray],
    store: SampleStore | None = None,
    n_draws: int = 0,
    link_scale: bool = True,
    clamp: bool = True,
) -> PredictionTable:
    """Posterior mean, standard error, +/-2 se band and optional curve draws.

    With ``link_scale=False`` the mean, band limits and curves are mapped
    through the inverse link; ``se`` stays on the link scale.
    """
    Xp = predict_lp_matrix(prefit, newdata, clamp=clamp)
    fit = Xp @ summary.b_hat
    se = _se(Xp, summary.V_beta)
    lo, hi = fit - BAND_MULT * se, fit + BAND_MULT * se
    curves = []
    if n_draws:
        if store is None:
            raise DataError("curve draws need the samples")
        B = _check_b(store, prefit)
        idx = thinned_indices(B.shape[0], n_draws)
        curves = [Xp @ B[i] for i in idx]
    if not link_scale:
        inv = prefit.family.linkinv
        fit, lo, hi = inv(fit), inv(lo), inv(hi)
        curves = [inv(c) for c in curves]
    names = list(dict.fromkeys(list(prefit.parametric) + [v for t in prefit.terms for v in t.variables]))
    header = names + ["fit", "se", "lo", "hi"] + [f"draw_{i}" for i in range(1, len(curves) + 1)]
    cols = [np.asarray(newdata[n], dtype=float) for n in names] + [fit, se, lo, hi] + curves
    return PredictionTable(header, cols)


def plot_data(prefit: Prefit, summary: PosteriorSummary, term_label: str, grid_size: int = 100) -> PredictionTable:
    """Centered smooth with +/-2 se band over a grid spanning the training range."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    t = prefit.term(term_label)
    grids = [np.linspace(kv.data_range[0], kv.data_range[1], grid_size) for kv in t.knots]
    if len(grids) == 2:
        g1, g2 = np.meshgrid(grids[0], grids[1], indexing="ij")
        grids = [g1.reshape(-1), g2.reshape(-1)]
    Xp = t.predict_matrix(grids)
    sl = prefit.term_slice(t)
    fit = Xp @ summary.b_hat[sl]
    se = _se(Xp, summary.V_beta[sl, sl])
    header = list(t.variables) + ["fit", "lo", "hi", "se"]
    return PredictionTable(header, grids + [fit, fit - BAND_MULT * se, fit + BAND_MULT * se, se])
