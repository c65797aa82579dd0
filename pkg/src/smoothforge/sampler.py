"""Conjugate block Gibbs sampler for diagonalized Gaussian additive models.

The model is y ~ N(Xb, 1/tau), tau ~ Gamma(.05, .005); each smooth's
penalized and null-space coefficient groups are i.i.d. N(0, 1/lambda_g) with
lambda_g ~ Gamma(.05, .005); parametric coefficients have fixed N(0, 1/tau_p)
priors.  One sweep updates b, then tau, then every lambda.

Random numbers come from a Philox generator seeded with ``seed + chain``.
Per block of iterations the normals are drawn first, then the tau gammas,
then the lambda gammas, so output is reproducible for a given seed.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels
from .assemble import Prefit
from .errors import CapabilityError, ProprietyError
from .formula import Family
from .options import GAMMA_RATE, GAMMA_SHAPE, SpPrior

logger = logging.getLogger(__name__)

BLOCK = 2048
MONITORS = ("b", "rho", "scale", "mu")


@dataclass(frozen=True)
class ConjugateModel:
    """Precomputed pieces of a conjugate model; shared read-only across chains."""

    X: np.ndarray
    y: np.ndarray
    XtX: np.ndarray
    Xty: np.ndarray
    prior_fixed: np.ndarray  # precision for coefficients outside any lambda group
    group: np.ndarray  # lambda group per coefficient, -1 for fixed
    group_sizes: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_groups(self) -> int:
        return len(self.group_sizes)

    def prior_precision(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        out = self.prior_fixed.copy()
        mask = self.group >= 0
        out[mask] = lam[self.group[mask]]
        return out


def conjugate_model(prefit: Prefit) -> ConjugateModel:
    """Check the Prefit is internally sampleable and precompute its statistics."""
    fam = prefit.family
    problems = []
    if fam.family is not Family.GAUSSIAN:
        problems.append(f"family {fam.family.value} is not gaussian")
    if prefit.options.sp_prior is not SpPrior.GAMMA:
        problems.append("log-uniform smoothing parameter priors are not conjugate")
    for t in prefit.terms:
        if not t.is_diagonal:
            problems.append(f"{t.label} has a multivariate normal (non-diagonal) prior")
    if problems:
        raise CapabilityError(
            "model not internally sampleable; use the emitted files with an external Gibbs sampler ("
            + "; ".join(problems)
            + ")"
        )
    p = prefit.p
    group = np.full(p, -1, dtype=np.int64)
    prior_fixed = np.zeros(p)
    prior_fixed[prefit.parametric_idx] = prefit.param_tau_shared
    sizes = []
    g = 0
    for t in prefit.terms:
        for lo, hi in t.diag_groups:
            group[t.coef_offset + lo : t.coef_offset + hi] = g
            sizes.append(hi - lo)
            g += 1
    X = np.ascontiguousarray(prefit.X)
    y = np.ascontiguousarray(prefit.y)
    return ConjugateModel(X, y, X.T @ X, X.T @ y, prior_fixed, group, np.asarray(sizes, dtype=np.int64))


@dataclass
class ChainState:
    b: np.ndarray
    lam: np.ndarray
    tau: float
    rng: np.random.Generator

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if np.any(np.asarray(self.lam) <= 0):
            raise ValueError("all lambda must be positive")


def make_rng(seed: int, chain: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) + int(chain)))


# ---------------------------------------------------------------------------
# single full-conditional updates


def beta_conditional(model: ConjugateModel, tau: float, lam) -> tuple[np.ndarray, np.ndarray]:
    """Mean and Cholesky factor L of Q = tau X'X + P(lambda), with Q = L L'."""
    Q = tau * model.XtX
    Q[np.diag_indices(model.p)] += model.prior_precision(lam)
    try:
        L = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        raise ProprietyError("posterior precision of b is not positive definite") from None
    u = solve_triangular(L, tau * model.Xty, lower=True)
    m = solve_triangular(L, u, lower=True, trans="T")
    return m, L


def update_beta(state: ChainState, model: ConjugateModel, z: np.ndarray | None = None) -> np.ndarray:
    """Draw b ~ N(m, Q^-1); ``z`` overrides the standard normal vector."""
    m, L = beta_conditional(model, state.tau, state.lam)
    if z is None:
        z = state.rng.standard_normal(model.p)
    return m + solve_triangular(L, z, lower=True, trans="T")


def tau_conditional(model: ConjugateModel, b: np.ndarray) -> tuple[float, float]:
    """(shape, rate) of the gamma full conditional of tau."""
    r = model.y - model.X @ b
    return GAMMA_SHAPE + 0.5 * model.n, GAMMA_RATE + 0.5 * float(r @ r)


def update_tau(state: ChainState, model: ConjugateModel) -> float:
    shape, rate = tau_conditional(model, state.b)
    return float(state.rng.gamma(shape, 1.0 / rate))


def lambda_conditional(model: ConjugateModel, b: np.ndarray, group: int) -> tuple[float, float]:
    bg = b[model.group == group]
    return GAMMA_SHAPE + 0.5 * len(bg), GAMMA_RATE + 0.5 * float(bg @ bg)


def update_lambda(state: ChainState, model: ConjugateModel, group: int) -> float:
    shape, rate = lambda_conditional(model, state.b, group)
    return float(state.rng.gamma(shape, 1.0 / rate))


# ---------------------------------------------------------------------------
# chains and storage


@dataclass
class SampleStore:
    """Thinned post-burn draws; ``draws[name]`` has shape (n_stored_total, dim)."""

    names: list[str]
    draws: dict[str, np.ndarray]
    chain: np.ndarray
    iteration: np.ndarray
    n_iter: int = 0
    burn: int = 0
    thin: int = 1
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return len(self.iteration)

    def columns(self) -> list[str]:
        cols = []
        for name in self.names:
            dim = self.draws[name].shape[1]
            if name == "scale":
                cols.append("scale")
            else:
                cols += [f"{name}[{i}]" for i in range(1, dim + 1)]
        return cols

    def matrix(self) -> np.ndarray:
        return np.hstack([self.draws[name] for name in self.names]) if self.names else np.empty((self.n_draws, 0))


def stored_count(n_iter: int, burn: int, thin: int) -> int:
    return max(0, (n_iter - burn) // thin)


def _run_chain(prefit: Prefit, model: ConjugateModel, n_iter: int, burn: int, thin: int,
               seed: int, chain: int, backend, fixed_tau: float | None,
               fixed_lambda) -> dict[str, np.ndarray]:
    rng = make_rng(seed, chain)
    p, G = model.p, model.n_groups
    b = np.array(prefit.b_init, dtype=float)
    tau = float(fixed_tau if fixed_tau is not None else (prefit.tau_init or 1.0))
    lam = np.array(fixed_lambda if fixed_lambda is not None else prefit.lambda_init, dtype=float)
    shape_tau = GAMMA_SHAPE + 0.5 * model.n
    shape_lam = GAMMA_SHAPE + 0.5 * model.group_sizes.astype(float)

    n_keep = stored_count(n_iter, burn, thin)
    kept_b = np.empty((n_keep, p))
    kept_tau = np.empty(n_keep)
    kept_lam = np.empty((n_keep, G))
    kept_iter = np.empty(n_keep, dtype=np.int64)
    k = 0
    done = 0
    while done < n_iter:
        m = min(BLOCK, n_iter - done)
        Z = rng.standard_normal((m, p))
        Gt = rng.standard_gamma(shape_tau, size=m)
        Gl = rng.standard_gamma(shape_lam, size=(m, G)) if G else np.empty((m, 0))
        ob = np.empty((m, p))
        ot = np.empty(m)
        ol = np.empty((m, G))
        try:
            tau = backend.gibbs_block(
                model.XtX, model.Xty, model.X, model.y, model.prior_fixed, model.group,
                GAMMA_RATE, GAMMA_RATE, Z, Gt, Gl, b, tau, lam,
                fixed_tau is None, fixed_lambda is None, ob, ot, ol,
            )
        except np.linalg.LinAlgError:
            raise ProprietyError("posterior precision of b is not positive definite") from None
        its = np.arange(done + 1, done + m + 1)
        keep = (its > burn) & ((its - burn) % thin == 0)
        nk = int(keep.sum())
        kept_b[k : k + nk] = ob[keep]
        kept_tau[k : k + nk] = ot[keep]
        kept_lam[k : k + nk] = ol[keep]
        kept_iter[k : k + nk] = its[keep]
        k += nk
        done += m
    return {"b": kept_b, "tau": kept_tau, "lambda": kept_lam, "iter": kept_iter}


def gibbs_run(
    prefit: Prefit,
    n_iter: int,
    burn: int = 0,
    thin: int = 1,
    seed: int = 1,
    monitors=("b", "rho", "scale"),
    chains: int = 1,
    backend: str = "auto",
    fixed_tau: float | None = None,
    fixed_lambda=None,
    workers: int | None = None,
) -> SampleStore:
    """Run independent chains and pool their thinned draws in chain order.

    ``fixed_tau``/``fixed_lambda`` hold those parameters constant (their
    updates are skipped; random numbers are still consumed).
    """
    if n_iter < 0 or burn < 0 or thin < 1 or chains < 1:
        raise ValueError("need n_iter >= 0, burn >= 0, thin >= 1, chains >= 1")
    burn = min(burn, n_iter)
    unknown = set(monitors) - set(MONITORS)
    if unknown:
        raise ValueError(f"unknown monitors {sorted(unknown)}; choose from {MONITORS}")
    model = conjugate_model(prefit)
    if fixed_lambda is not None:
        fixed_lambda = np.asarray(fixed_lambda, dtype=float)
        if fixed_lambda.shape != (model.n_groups,):
            raise ValueError(f"fixed_lambda needs {model.n_groups} entries")
    mod = kernels.get_backend(backend) if backend != "auto" else kernels.default

    def one(c):
        return _run_chain(prefit, model, n_iter, burn, thin, seed, c, mod, fixed_tau, fixed_lambda)

    if chains == 1:
        results = [one(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers or chains) as ex:
            results = list(ex.map(one, range(chains)))

    names = [m for m in MONITORS if m in monitors]
    draws = {}
    for name in names:
        parts = []
        for r in results:
            if name == "b":
                parts.append(r["b"])
            elif name == "rho":
                parts.append(np.log(r["lambda"]))
            elif name == "scale":
                parts.append((1.0 / r["tau"])[:, None])
            else:
                parts.append(r["b"] @ prefit.X.T)
        draws[name] = np.vstack(parts)
    chain_ix = np.concatenate([np.full(len(r["iter"]), c, dtype=np.int64) for c, r in enumerate(results)])
    iters = np.concatenate([r["iter"] for r in results])
    return SampleStore(
        names=names,
        draws=draws,
        chain=chain_ix,
        iteration=iters,
        n_iter=n_iter,
        burn=burn,
        thin=thin,
        seed=seed,
        meta={"backend": kernels.backend_name(mod), "chains": chains},
    )
