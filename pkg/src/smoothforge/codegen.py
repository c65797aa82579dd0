"""JAGS model text and R-dump data/inits files.

Output is byte-reproducible: the same Prefit and options always give the same
text.  Fixed prior constants are literal template text; data-dependent
precisions are printed with six significant digits.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .assemble import Prefit, diag_prior_groups, pack_inits, pack_sampler_data
from .basis import SmoothBlock
from .errors import SmoothforgeError
from .formula import Family
from .options import CodegenOptions, SpPrior


def fmt_const(v: float) -> str:
    return f"{float(v):.6g}"


def _style(prefit: Prefit) -> str:
    # the gaussian template is written with spaces after commas
    return ", " if prefit.family.family is Family.GAUSSIAN else ","


def _family_block(prefit: Prefit) -> list[str]:
    fam = prefit.family.family
    if fam is Family.GAUSSIAN:
        return [
            "  mu <- X %*% b ## expected response",
            "  for (i in 1:n) { y[i] ~ dnorm(mu[i], tau) } ## response",
            "  scale <- 1 / tau ## convert tau to standard GLM scale",
            "  tau ~ dgamma(.05, .005) ## precision parameter prior",
        ]
    lines = ["  eta <- X %*% b"]
    if fam is Family.GAMMA:
        lines += [
            "  for (i in 1:n) { mu[i] <- exp(eta[i]) } ## expected response",
            "  for (i in 1:n) { y[i] ~ dgamma(r,r/mu[i]) } ## response",
            "  r ~ dgamma(.05,.005) ## scale parameter prior",
            "  scale <- 1/r ## convert r to standard GLM scale",
        ]
    elif fam is Family.BINOMIAL:
        lines += [
            "  for (i in 1:n) { mu[i] <- ilogit(eta[i]) } ## expected response",
            "  for (i in 1:n) { y[i] ~ dbin(mu[i],w[i]) } ## response",
        ]
    else:
        lines += [
            "  for (i in 1:n) { mu[i] <- exp(eta[i]) } ## expected response",
            "  for (i in 1:n) { y[i] ~ dpois(mu[i]) } ## response",
        ]
    return lines


def smooth_prior_block(block: SmoothBlock, slab: int, lam: tuple[int, int],
                       coef: tuple[int, int]) -> list[str]:
    """K construction and dmnorm statement for a multivariate-normal smooth.

    ``slab`` is the S-matrix number; ``lam`` and ``coef`` are 1-based inclusive
    ranges of smoothing parameter and coefficient indices.
    """
    if block.is_diagonal:
        raise SmoothforgeError(f"{block.label} is diagonalized; it has no K matrix")
    m = block.n_coef
    n_lam = lam[1] - lam[0] + 1
    parts = [
        f"S{slab}[1:{m},{j * m + 1}:{(j + 1) * m}]*lambda[{lam[0] + j}]" for j in range(n_lam)
    ]
    lo, hi = coef
    return [
        f"  K{slab} <- " + " + ".join(parts),
        f"  b[{lo}:{hi}] ~ dmnorm(zero[{lo}:{hi}],K{slab})",
    ]


def sp_prior_block(sp_count: int, options: CodegenOptions, sep: str = ",") -> list[str]:
    if sp_count == 0:
        return []
    if options.sp_prior is SpPrior.GAMMA:
        body = [
            f"    lambda[i] ~ dgamma(.05{sep}.005)",
            "    rho[i] <- log(lambda[i])",
        ]
    else:
        body = [
            f"    rho[i] ~ dunif({fmt_const(options.lo)}{sep}{fmt_const(options.hi)})",
            "    lambda[i] <- exp(rho[i])",
        ]
    return [f"  for (i in 1:{sp_count}) {{", *body, "  }"]


def emit_model(prefit: Prefit, options: CodegenOptions | None = None) -> str:
    """Full JAGS model text for the assembled model."""
    options = options or prefit.options
    sep = _style(prefit)
    lines = ["model {", *_family_block(prefit)]

    n_par = len(prefit.parametric_idx)
    lines.append("  ## Parameteric effect priors CHECK tau is appropriate!")
    lines.append(
        f"  for (i in 1:{n_par}) {{ b[i] ~ dnorm(0{sep}{fmt_const(prefit.param_tau_shared)}) }}"
    )

    groups = {g[0]: g for g in diag_prior_groups(prefit)}
    for slab, (t, lam0) in enumerate(zip(prefit.terms, prefit.lambda_starts), start=1):
        lines.append(f"  ## prior for {t.label}...")
        first = t.coef_offset + 1
        last = t.coef_offset + t.n_coef
        if t.is_diagonal:
            for lo, hi in t.diag_groups:
                a, b_, lam = groups[t.coef_offset + lo + 1]
                lines.append(f"  for (i in {a}:{b_}) {{ b[i] ~ dnorm(0{sep}lambda[{lam}]) }}")
        else:
            lines += smooth_prior_block(t, slab, (lam0 + 1, lam0 + t.n_lambda), (first, last))

    if prefit.sp_count:
        lines.append("  ## smoothing parameter priors CHECK...")
        lines += sp_prior_block(prefit.sp_count, options, sep)
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# self-check of emitted text

_LOOP_DNORM = re.compile(r"for \(i in (\d+):(\d+)\) \{ b\[i\] ~ dnorm\(0,\s*([^)]*)\) \}")
_DMNORM = re.compile(r"b\[(\d+):(\d+)\] ~ dmnorm\(zero\[(\d+):(\d+)\],\s*K(\d+)\)")
_K_DEF = re.compile(r"K(\d+) <- (.*)")
_LAMBDA_REF = re.compile(r"lambda\[(\d+)\]")
_SP_LOOP = re.compile(r"for \(i in 1:(\d+)\) \{\s*\n\s*(lambda|rho)\[i\] ~")


@dataclass
class ModelAudit:
    coef_counts: dict[int, int] = field(default_factory=dict)
    lambda_prior_counts: dict[int, int] = field(default_factory=dict)
    lambda_uses: dict[int, int] = field(default_factory=dict)

    def problems(self, p: int, sp_count: int) -> list[str]:
        out = []
        for i in range(1, p + 1):
            c = self.coef_counts.get(i, 0)
            if c != 1:
                out.append(f"b[{i}] has {c} prior statements")
        extra = set(self.coef_counts) - set(range(1, p + 1))
        if extra:
            out.append(f"out-of-range coefficient indices {sorted(extra)}")
        for j in range(1, sp_count + 1):
            if self.lambda_prior_counts.get(j, 0) != 1:
                out.append(f"lambda[{j}] has {self.lambda_prior_counts.get(j, 0)} priors")
            if self.lambda_uses.get(j, 0) < 1:
                out.append(f"lambda[{j}] is never used")
        return out


def audit_model_text(text: str) -> ModelAudit:
    """Recover prior coverage of b and lambda indices from emitted model text."""
    audit = ModelAudit()

    def bump(d, i):
        d[i] = d.get(i, 0) + 1

    for m in _LOOP_DNORM.finditer(text):
        for i in range(int(m.group(1)), int(m.group(2)) + 1):
            bump(audit.coef_counts, i)
        for ref in _LAMBDA_REF.finditer(m.group(3)):
            bump(audit.lambda_uses, int(ref.group(1)))
    for m in _DMNORM.finditer(text):
        for i in range(int(m.group(1)), int(m.group(2)) + 1):
            bump(audit.coef_counts, i)
    for m in _K_DEF.finditer(text):
        for ref in _LAMBDA_REF.finditer(m.group(2)):
            bump(audit.lambda_uses, int(ref.group(1)))
    for m in _SP_LOOP.finditer(text):
        for j in range(1, int(m.group(1)) + 1):
            bump(audit.lambda_prior_counts, j)
    return audit


# ---------------------------------------------------------------------------
# R dump format


def fmt_dump_num(v) -> str:
    """Exact decimal text for one number (shortest round-trip)."""
    if isinstance(v, (bool, np.bool_)):
        raise TypeError("booleans are not dump values")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not np.isfinite(v):
        raise ValueError(f"non-finite value {v} cannot be dumped")
    if v == 0.0:
        return "-0" if np.signbit(v) else "0"
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def dump_value(value) -> str:
    if np.isscalar(value) or (isinstance(value, np.ndarray) and value.ndim == 0):
        return fmt_dump_num(value.item() if isinstance(value, np.ndarray) else value)
    a = np.asarray(value)
    if a.ndim == 1:
        return "c(" + ", ".join(fmt_dump_num(v) for v in a.tolist()) + ")"
    flat = a.reshape(-1, order="F").tolist()
    dims = ", ".join(str(d) for d in a.shape)
    return "structure(c(" + ", ".join(fmt_dump_num(v) for v in flat) + f"), .Dim = c({dims}))"


def dump_r(objects: dict[str, object]) -> str:
    """Serialize named scalars, vectors and matrices (column-major) as R dump text."""
    return "".join(f'"{name}" <- {dump_value(val)}\n' for name, val in objects.items())


_DUMP_TOKEN = re.compile(r'\s*(?:(?P<str>"[^"]*")|(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?L?)'
                         r"|(?P<word>[A-Za-z_.][A-Za-z0-9_.]*)|(?P<op><-|[(),=]))")


def read_dump(text: str) -> dict[str, object]:
    """Parse R dump text written by :func:`dump_r` back into arrays."""
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _DUMP_TOKEN.match(text, pos)
        if m is None:
            raise SmoothforgeError(f"dump parse error at character {pos}")
        toks.append((m.lastgroup, m.group(m.lastgroup)))
        pos = m.end()
    i = 0

    def take(kind=None, val=None):
        nonlocal i
        if i >= len(toks):
            raise SmoothforgeError("unexpected end of dump")
        k, v = toks[i]
        if (kind and k != kind) or (val and v != val):
            raise SmoothforgeError(f"dump parse error near {v!r}")
        i += 1
        return v

    def num(v: str) -> float:
        return float(v.rstrip("L"))

    def vector() -> list[float]:
        take("word", "c")
        take("op", "(")
        vals = []
        while toks[i][1] != ")":
            vals.append(num(take("num")))
            if toks[i][1] == ",":
                take("op", ",")
        take("op", ")")
        return vals

    out: dict[str, object] = {}
    while i < len(toks):
        name = take("str")[1:-1]
        take("op", "<-")
        kind, v = toks[i]
        if kind == "num":
            out[name] = num(take("num"))
        elif v == "c":
            out[name] = np.asarray(vector())
        elif v == "structure":
            take("word")
            take("op", "(")
            data = vector()
            take("op", ",")
            take("word", ".Dim")
            take("op", "=")
            dims = [int(d) for d in vector()]
            take("op", ")")
            out[name] = np.asarray(data).reshape(dims, order="F")
        else:
            raise SmoothforgeError(f"unsupported dump value for {name!r}")
    return out


def emit_data(prefit: Prefit) -> str:
    return dump_r(pack_sampler_data(prefit))


def emit_inits(prefit: Prefit) -> str:
    return dump_r(pack_inits(prefit))
