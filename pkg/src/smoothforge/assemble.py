"""Model assembly: full design, penalty slabs, initial values and prior scales.

Coefficients are laid out as intercept, parametric terms, then smooths, each
block contiguous and in source order.  Smoothing parameters are numbered in
the same order; within a smooth the wiggliness penalties come first and the
null-space penalty (or null-space group, when diagonalized) last.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .basis import (
    SmoothBlock,
    absorb_centering,
    build_tensor_smooth,
    build_univariate_smooth,
    diagonalize,
    with_null_penalty,
)
from .errors import DataError, ProprietyError
from .formula import Family, FamilySpec, FormulaAst, SmoothKind, format_formula, validate_against_data
from .options import CodegenOptions, SpPrior

logger = logging.getLogger(__name__)

LAMBDA_INIT = 1.0


@dataclass(frozen=True)
class Prefit:
    ast: FormulaAst
    family: FamilySpec
    options: CodegenOptions
    y: np.ndarray
    w: np.ndarray
    X: np.ndarray
    terms: tuple[SmoothBlock, ...]
    parametric: tuple[str, ...]
    parametric_idx: np.ndarray
    sp_count: int
    lambda_init: np.ndarray
    b_init: np.ndarray = field(default=None)
    se_init: np.ndarray = field(default=None)
    param_prior_tau: np.ndarray = field(default=None)
    tau_init: float | None = None
    n_dropped: int = 0
    weights_column: str | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def formula(self) -> str:
        return format_formula(self.ast)

    @property
    def lambda_starts(self) -> list[int]:
        out, start = [], 0
        for t in self.terms:
            out.append(start)
            start += t.n_lambda
        return out

    @property
    def param_tau_shared(self) -> float:
        """Single precision used for all parametric coefficients (the vaguest one)."""
        return float(np.min(self.param_prior_tau))

    def term(self, label: str) -> SmoothBlock:
        compact = label.replace(" ", "")
        for t in self.terms:
            if t.label == compact:
                return t
        known = ", ".join(t.label for t in self.terms) or "none"
        raise DataError(f"unknown term {label!r} (model terms: {known})")

    def term_slice(self, t: SmoothBlock) -> slice:
        return slice(t.coef_offset, t.coef_offset + t.n_coef)

    def response_for_irls(self) -> np.ndarray:
        """Response on the mean scale (binomial counts become proportions)."""
        if self.family.family is Family.BINOMIAL:
            return self.y / self.w
        return self.y


@dataclass
class InitReport:
    b_init: np.ndarray
    se_init: np.ndarray
    eta0: np.ndarray
    mu0: np.ndarray
    notes: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------


def _drop_missing(data: Mapping[str, np.ndarray], names: list[str]) -> tuple[dict, int]:
    cols = {name: np.asarray(data[name], dtype=float) for name in names}
    n = len(next(iter(cols.values())))
    keep = np.ones(n, dtype=bool)
    for name, col in cols.items():
        if len(col) != n:
            raise DataError(f"column {name!r} has {len(col)} rows, expected {n}")
        keep &= np.isfinite(col)
    dropped = int(n - keep.sum())
    if keep.sum() == 0:
        raise DataError("no complete rows remain after dropping missing values")
    return {name: col[keep] for name, col in cols.items()}, dropped


def _check_response(family: FamilySpec, y: np.ndarray, w: np.ndarray, weights_column: str | None):
    fam = family.family
    if fam is Family.BINOMIAL:
        if weights_column is None:
            if not np.all((y == 0) | (y == 1)):
                raise DataError("binomial response must be 0/1 unless a weights column gives trial counts")
        else:
            if np.any(w <= 0) or np.any(w != np.round(w)):
                raise DataError("binomial trial counts must be positive integers")
            if np.any(y < 0) or np.any(y > w) or np.any(y != np.round(y)):
                raise DataError("binomial response must be an integer count between 0 and the trial count")
    elif fam is Family.GAMMA:
        if np.any(y <= 0):
            raise DataError("gamma response must be strictly positive")
    elif fam is Family.POISSON:
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise DataError("poisson response must be non-negative integers")


def assemble_design(
    ast: FormulaAst,
    data: Mapping[str, np.ndarray],
    family: FamilySpec,
    options: CodegenOptions | None = None,
    *,
    weights: str | None = None,
    allow_overparam: bool = False,
) -> Prefit:
    """Build the full model from a parsed formula and a column mapping.

    Rows with a missing value in any used column are dropped (the count is
    kept on the result).  Initial values and parametric prior precisions are
    filled in before returning.
    """
    options = options or CodegenOptions()
    if weights is not None and family.family is not Family.BINOMIAL:
        raise DataError("a weights column is only supported for the binomial family")
    names = ast.variables + ([weights] if weights and weights not in ast.variables else [])
    for name in names:
        if name not in data:
            raise DataError(f"variable {name} not found")
    cols, dropped = _drop_missing(data, names)
    n = len(cols[ast.response])
    validate_against_data(ast, list(cols), n, allow_overparam=allow_overparam)

    y = cols[ast.response]
    w = cols[weights] if weights else np.ones(n)
    _check_response(family, y, w, weights)

    blocks: list[np.ndarray] = [np.ones((n, 1))]
    for name in ast.parametric:
        blocks.append(cols[name][:, None])
    offset = 1 + len(ast.parametric)

    terms = []
    for sm in ast.smooths:
        if sm.kind is SmoothKind.S:
            blk = build_univariate_smooth(cols[sm.variables[0]], sm.k[0], sm.label, sm.variables[0])
        else:
            blk = build_tensor_smooth(
                cols[sm.variables[0]], cols[sm.variables[1]], sm.k, sm.label, sm.variables
            )
        blk = absorb_centering(blk)
        if options.diagonalize and len(blk.penalties) == 1:
            blk = diagonalize(blk)
        else:
            blk = with_null_penalty(blk)
        blk = replace(blk, coef_offset=offset)
        offset += blk.n_coef
        terms.append(blk)
        blocks.append(blk.X)

    X = np.hstack(blocks)
    sp_count = sum(t.n_lambda for t in terms)
    prefit = Prefit(
        ast=ast,
        family=family,
        options=options,
        y=y,
        w=w,
        X=X,
        terms=tuple(terms),
        parametric=tuple(ast.parametric),
        parametric_idx=np.arange(1 + len(ast.parametric)),
        sp_count=sp_count,
        lambda_init=np.full(sp_count, LAMBDA_INIT),
        n_dropped=dropped,
        weights_column=weights,
    )
    init = pirls_init(prefit)
    tau = parametric_prior_precision(init.b_init, init.se_init, prefit.parametric_idx)
    tau_init = None
    if family.family is Family.GAUSSIAN:
        rss = float(np.sum((y - X @ init.b_init) ** 2))
        tau_init = n / rss if rss > 0 else 1.0
    return replace(
        prefit, b_init=init.b_init, se_init=init.se_init, param_prior_tau=tau, tau_init=tau_init
    )


def penalty_matrix(prefit: Prefit, lambdas) -> np.ndarray:
    """p x p smoothing penalty sum_j lambda_j S_j (zero on parametric coefficients)."""
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.shape != (prefit.sp_count,):
        raise ValueError(f"expected {prefit.sp_count} smoothing parameters, got {lambdas.shape}")
    P = np.zeros((prefit.p, prefit.p))
    j = 0
    for t in prefit.terms:
        sl = prefit.term_slice(t)
        for pen in t.prior_penalties:
            P[sl, sl] += lambdas[j] * pen.S
            j += 1
    return P


def _init_mu(family: FamilySpec, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    fam = family.family
    if fam is Family.GAUSSIAN:
        return y.copy()
    if fam is Family.BINOMIAL:
        return (w * y + 0.5) / (w + 1.0)
    return np.maximum(y, y.mean() / 10.0) + 0.1


def pirls_init(prefit: Prefit) -> InitReport:
    """One penalized IRLS step from the family's data-based starting mean."""
    fam = prefit.family
    y = prefit.response_for_irls()
    mu0 = _init_mu(fam, y, prefit.w)
    eta0 = fam.linkfun(mu0)
    gprime = fam.mu_eta(mu0)
    z = eta0 + (y - mu0) * gprime
    wt = fam.irls_weights(mu0, prefit.w)
    X = prefit.X
    A = X.T @ (wt[:, None] * X) + penalty_matrix(prefit, prefit.lambda_init)
    try:
        cf = cho_factor(A, lower=True)
    except np.linalg.LinAlgError:
        raise ProprietyError(
            "penalized normal equations are singular at initialization"
        ) from None
    b = cho_solve(cf, X.T @ (wt * z))
    cov = cho_solve(cf, np.eye(prefit.p))
    se = np.sqrt(np.diag(cov))
    notes = [f"family={fam.family.value}", f"lambda_init={LAMBDA_INIT}"]
    report = InitReport(b, se, eta0, mu0, notes)
    for name in ("b_init", "se_init", "eta0", "mu0"):
        if not np.all(np.isfinite(getattr(report, name))):
            raise ProprietyError(f"non-finite {name} at initialization")
    return report


def parametric_prior_precision(b_init, se_init, parametric_idx) -> np.ndarray:
    """Precision 1/(10(|b| + se))^2 for each parametric coefficient."""
    idx = np.asarray(parametric_idx, dtype=int)
    b = np.asarray(b_init, dtype=float)[idx]
    se = np.asarray(se_init, dtype=float)[idx]
    sd = 10.0 * (np.abs(b) + se)
    return 1.0 / sd**2


def pack_sampler_data(prefit: Prefit) -> dict[str, object]:
    """Named objects the emitted model refers to, in dump order."""
    out: dict[str, object] = {"n": prefit.n, "y": prefit.y, "X": prefit.X}
    if prefit.family.family is Family.BINOMIAL:
        out["w"] = prefit.w
    out["zero"] = np.zeros(prefit.p)
    for i, t in enumerate(prefit.terms, start=1):
        if t.is_diagonal:
            continue
        out[f"S{i}"] = np.hstack([pen.S for pen in t.prior_penalties])
    return out


def pack_inits(prefit: Prefit) -> dict[str, object]:
    """Initial values: b, the smoothing parameters, and tau for gaussian models."""
    out: dict[str, object] = {"b": prefit.b_init}
    if prefit.sp_count:
        if prefit.options.sp_prior is SpPrior.GAMMA:
            out["lambda"] = prefit.lambda_init
        else:
            out["rho"] = np.log(prefit.lambda_init)
    if prefit.family.family is Family.GAUSSIAN:
        out["tau"] = prefit.tau_init
    return out


def diag_prior_groups(prefit: Prefit) -> list[tuple[int, int, int]]:
    """(first, last, lambda index) triples, 1-based and inclusive, for diagonalized smooths."""
    out = []
    for t, lam0 in zip(prefit.terms, prefit.lambda_starts):
        if not t.is_diagonal:
            continue
        for j, (lo, hi) in enumerate(t.diag_groups):
            out.append((t.coef_offset + lo + 1, t.coef_offset + hi, lam0 + j + 1))
    return out
