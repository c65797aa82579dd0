"""Spline bases, penalties, and the reparameterizations applied to them.

Univariate smooths are cubic P-splines: a clamped B-spline basis with knots
at quantiles of the distinct covariate values and a second-order difference
penalty on the coefficients.  Tensor smooths take row-wise Kronecker products
of two marginal bases with one Kronecker-expanded penalty per margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import DataError, ProprietyError, SmoothforgeError
from .formula import DEGREE, MIN_K

EIG_EPS = 1e-10


@dataclass(frozen=True)
class KnotVector:
    degree: int
    knots: np.ndarray
    data_range: tuple[float, float]

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def interior(self) -> np.ndarray:
        return self.knots[self.degree + 1 : -(self.degree + 1)]


@dataclass(frozen=True)
class PenaltyMatrix:
    S: np.ndarray
    rank: int
    label: str = ""

    @classmethod
    def from_matrix(cls, S: np.ndarray, label: str = "") -> "PenaltyMatrix":
        S = 0.5 * (S + S.T)
        return cls(S, matrix_rank_sym(S), label)


@dataclass(frozen=True)
class Reparam:
    """Record of the eigen-reparameterization; coefficients map as beta = U D^-1 beta'."""

    U: np.ndarray
    d: np.ndarray  # diagonal of D

    @property
    def transform(self) -> np.ndarray:
        return self.U / self.d[None, :]


@dataclass(frozen=True)
class SmoothBlock:
    label: str
    variables: tuple[str, ...]
    X: np.ndarray
    penalties: tuple[PenaltyMatrix, ...]
    null_dim: int
    knots: tuple[KnotVector, ...]
    centering: np.ndarray | None = None
    reparam: Reparam | None = None
    # (start, stop) column ranges with i.i.d. priors, set by diagonalize;
    # the last range is the null-space block when null_dim > 0
    diag_groups: tuple[tuple[int, int], ...] = ()
    coef_offset: int = -1
    null_penalty: PenaltyMatrix | None = field(default=None, compare=False)

    @property
    def n_coef(self) -> int:
        return self.X.shape[1]

    @property
    def n_raw(self) -> int:
        return int(np.prod([kv.n_basis for kv in self.knots]))

    @property
    def is_diagonal(self) -> bool:
        return self.reparam is not None

    @property
    def prior_penalties(self) -> tuple[PenaltyMatrix, ...]:
        """Penalties as they enter the prior precision (null-space penalty appended)."""
        if self.is_diagonal:
            out = []
            for lo, hi in self.diag_groups:
                S = np.zeros((self.n_coef, self.n_coef))
                S[np.arange(lo, hi), np.arange(lo, hi)] = 1.0
                out.append(PenaltyMatrix(S, hi - lo, f"{self.label}[{lo}:{hi}]"))
            return tuple(out)
        if self.null_penalty is not None and self.null_penalty.rank > 0:
            return self.penalties + (self.null_penalty,)
        return self.penalties

    @property
    def n_lambda(self) -> int:
        return len(self.prior_penalties)

    def coef_transform(self) -> np.ndarray:
        """Map from final coefficients to raw B-spline (or tensor) coefficients."""
        T = np.eye(self.n_raw) if self.centering is None else self.centering
        if self.reparam is not None:
            T = T @ self.reparam.transform
        return T

    def raw_design(self, columns: list[np.ndarray], clamp: bool = True) -> np.ndarray:
        """Unconstrained basis evaluated at new covariate values."""
        mats = [bspline_design(x, kv, clamp=clamp) for x, kv in zip(columns, self.knots)]
        if len(mats) == 1:
            return mats[0]
        return row_kron(mats[0], mats[1])

    def predict_matrix(self, columns: list[np.ndarray], clamp: bool = True) -> np.ndarray:
        return self.raw_design(columns, clamp=clamp) @ self.coef_transform()


def matrix_rank_sym(S: np.ndarray, eps: float = EIG_EPS) -> int:
    if S.size == 0:
        return 0
    ev = np.linalg.eigvalsh(S)
    top = np.max(np.abs(ev))
    if top == 0.0:
        return 0
    return int(np.sum(ev > eps * top))


def row_kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker product: row i is kron(A[i], B[i])."""
    n = A.shape[0]
    return (A[:, :, None] * B[:, None, :]).reshape(n, A.shape[1] * B.shape[1])


# ---------------------------------------------------------------------------
# knots and basis


def make_knots(x, k: int) -> KnotVector:
    """Clamped cubic knot vector with ``k - 4`` interior knots.

    Interior knots sit at the quantiles j/(k-3), j = 1..k-4, of the distinct
    covariate values (linear interpolation between order statistics).
    """
    if k < MIN_K:
        raise DataError(f"k={k} below minimum {MIN_K}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError("covariate contains non-finite values")
    ux = np.unique(x)
    if len(ux) < k:
        raise DataError(f"covariate has {len(ux)} distinct values; k={k} needs at least {k}")
    lo, hi = float(ux[0]), float(ux[-1])
    n_int = k - DEGREE - 1
    probs = np.arange(1, n_int + 1) / (n_int + 1)
    interior = np.quantile(ux, probs) if n_int else np.empty(0)
    knots = np.concatenate([np.full(DEGREE + 1, lo), interior, np.full(DEGREE + 1, hi)])
    return KnotVector(DEGREE, knots, (lo, hi))


def bspline_design(x, kv: KnotVector, clamp: bool = True, backend: str = "auto") -> np.ndarray:
    """n x k B-spline design matrix; rows are a partition of unity.

    Covariates outside the knot range are clamped to the nearest endpoint, or
    rejected when ``clamp`` is False.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    lo, hi = kv.data_range
    outside = (x < lo) | (x > hi)
    if np.any(outside):
        if not clamp:
            raise DataError(
                f"{int(outside.sum())} covariate value(s) outside the training range [{lo}, {hi}]"
            )
        x = np.clip(x, lo, hi)
    return kernels.get_backend(backend).bspline_basis(x, kv.knots, kv.degree)


def difference_penalty(k: int, order: int = 2) -> PenaltyMatrix:
    """S = D^T D with D the ``order``-th difference operator on k coefficients."""
    if k <= order:
        raise SmoothforgeError(f"difference penalty needs k > order (k={k}, order={order})")
    D = np.diff(np.eye(k), n=order, axis=0)
    return PenaltyMatrix(D.T @ D, k - order, f"diff{order}")


# ---------------------------------------------------------------------------
# smooth construction


def build_univariate_smooth(x, k: int, label: str, variable: str | None = None) -> SmoothBlock:
    kv = make_knots(x, k)
    X = bspline_design(x, kv)
    S = difference_penalty(k, 2)
    S = replace(S, label=label)
    return SmoothBlock(
        label=label,
        variables=(variable or label,),
        X=X,
        penalties=(S,),
        null_dim=2,
        knots=(kv,),
    )


def build_tensor_smooth(x1, x2, k: tuple[int, int], label: str,
                        variables: tuple[str, str] | None = None) -> SmoothBlock:
    kv1, kv2 = make_knots(x1, k[0]), make_knots(x2, k[1])
    X = row_kron(bspline_design(x1, kv1), bspline_design(x2, kv2))
    S1 = difference_penalty(k[0]).S
    S2 = difference_penalty(k[1]).S
    P1 = PenaltyMatrix.from_matrix(np.kron(S1, np.eye(k[1])), f"{label}:1")
    P2 = PenaltyMatrix.from_matrix(np.kron(np.eye(k[0]), S2), f"{label}:2")
    return SmoothBlock(
        label=label,
        variables=tuple(variables or (label + ".1", label + ".2")),
        X=X,
        penalties=(P1, P2),
        null_dim=4,
        knots=(kv1, kv2),
    )


def householder_null(c: np.ndarray) -> np.ndarray:
    """Orthonormal p x (p-1) basis of the complement of ``c`` via one reflection."""
    c = np.asarray(c, dtype=float)
    p = c.shape[0]
    v = c.copy()
    alpha = np.linalg.norm(c)
    v[0] += np.copysign(alpha, c[0]) if c[0] != 0 else alpha
    H = np.eye(p) - 2.0 * np.outer(v, v) / (v @ v)
    return H[:, 1:]


def absorb_centering(block: SmoothBlock) -> SmoothBlock:
    """Reparameterize so the smooth sums to zero over the training rows."""
    if block.centering is not None:
        raise SmoothforgeError(f"{block.label} is already centered")
    c = block.X.sum(axis=0)
    if not np.any(c):
        raise SmoothforgeError(f"{block.label}: column sums already zero (double centering?)")
    Z = householder_null(c)
    X = block.X @ Z
    pens = tuple(
        PenaltyMatrix.from_matrix(Z.T @ P.S @ Z, P.label) for P in block.penalties
    )
    total = sum(P.S for P in pens)
    null_dim = Z.shape[1] - matrix_rank_sym(total)
    return replace(block, X=X, penalties=pens, null_dim=null_dim, centering=Z)


def null_space_penalty(penalties) -> PenaltyMatrix:
    """Projector onto the joint null space of the given penalties."""
    mats = [P.S if isinstance(P, PenaltyMatrix) else np.asarray(P) for P in penalties]
    total = sum(mats)
    ev, U = np.linalg.eigh(total)
    top = np.max(np.abs(ev)) if ev.size else 0.0
    U0 = U[:, ev < EIG_EPS * top] if top > 0 else U
    S0 = U0 @ U0.T
    return PenaltyMatrix(0.5 * (S0 + S0.T), U0.shape[1], "null")


def with_null_penalty(block: SmoothBlock) -> SmoothBlock:
    return replace(block, null_penalty=null_space_penalty(block.penalties))


def diagonalize(block: SmoothBlock) -> SmoothBlock:
    """Turn a single-penalty smooth into independent-normal form.

    With S = U diag(ev) U^T (eigenvalues descending) and D = diag(sqrt(ev+), 1...),
    the new design is X U D^-1 and the penalty is the identity on the leading
    coefficients and zero on the trailing ``null_dim`` ones.
    """
    if len(block.penalties) != 1:
        raise SmoothforgeError(
            f"{block.label} has {len(block.penalties)} penalties; only single-penalty "
            "smooths can be diagonalized (use the multivariate normal prior instead)"
        )
    if block.reparam is not None:
        raise SmoothforgeError(f"{block.label} is already diagonalized")
    S = block.penalties[0].S
    ev, U = np.linalg.eigh(S)
    order = np.argsort(-ev, kind="stable")
    ev, U = ev[order], U[:, order]
    top = ev[0] if ev.size else 0.0
    r = int(np.sum(ev > EIG_EPS * top))
    if r == 0:
        raise ProprietyError(f"{block.label}: penalty is zero")
    p = S.shape[0]
    d = np.ones(p)
    d[:r] = np.sqrt(ev[:r])
    rep = Reparam(U, d)
    X = block.X @ rep.transform
    groups = [(0, r)]
    if r < p:
        groups.append((r, p))
    pen = np.zeros((p, p))
    pen[np.arange(r), np.arange(r)] = 1.0
    return replace(
        block,
        X=X,
        penalties=(PenaltyMatrix(pen, r, block.penalties[0].label),),
        null_dim=p - r,
        reparam=rep,
        diag_groups=tuple(groups),
        null_penalty=None,
    )
