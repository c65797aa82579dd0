"""Model formula DSL and family/link selection.

The accepted grammar is a closed subset of R-style model formulas::

    formula := NAME "~" term ("+" term)*
    term    := NAME
             | "s"  "(" NAME ["," "k" "=" INT] ")"
             | "te" "(" NAME "," NAME ["," "k" "=" INT] ")"

Names follow R conventions (letters, digits, ``.`` and ``_``; may start with a
dot), so ``union.member ~ s(wage, k=20)`` parses.  Errors carry the UTF-8 byte
offset of the offending token.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FormulaError

DEGREE = 3
MIN_K = DEGREE + 1
DEFAULT_K_S = 10
DEFAULT_K_TE = 5


class SmoothKind(enum.Enum):
    S = "s"
    TE = "te"


@dataclass(frozen=True)
class SmoothSpec:
    kind: SmoothKind
    variables: tuple[str, ...]
    k: tuple[int, ...]

    def __post_init__(self):
        want = 1 if self.kind is SmoothKind.S else 2
        if len(self.variables) != want or len(self.k) != want:
            raise FormulaError(f"{self.kind.value}() takes {want} variable(s)")
        if len(set(self.variables)) != len(self.variables):
            raise FormulaError(f"repeated variable in {self.label}")
        for kk in self.k:
            if kk < MIN_K:
                raise FormulaError(f"k={kk} below minimum {MIN_K} in {self.label}")

    @property
    def label(self) -> str:
        return f"{self.kind.value}({','.join(self.variables)})"

    @property
    def n_raw(self) -> int:
        """Basis dimension before the centering constraint."""
        return int(np.prod(self.k))

    @property
    def n_coef(self) -> int:
        return self.n_raw - 1


@dataclass(frozen=True)
class FormulaAst:
    response: str
    intercept: bool = True
    parametric: tuple[str, ...] = ()
    smooths: tuple[SmoothSpec, ...] = ()

    @property
    def variables(self) -> list[str]:
        """Every variable the model reads, response first, without repeats."""
        out = [self.response]
        for name in self.parametric:
            if name not in out:
                out.append(name)
        for sm in self.smooths:
            for name in sm.variables:
                if name not in out:
                    out.append(name)
        return out

    @property
    def n_coef(self) -> int:
        return int(self.intercept) + len(self.parametric) + sum(s.n_coef for s in self.smooths)


# ---------------------------------------------------------------------------
# family / link


class Family(enum.Enum):
    GAUSSIAN = "gaussian"
    GAMMA = "gamma"
    BINOMIAL = "binomial"
    POISSON = "poisson"


class Link(enum.Enum):
    IDENTITY = "identity"
    LOG = "log"
    LOGIT = "logit"


_CANONICAL = {
    Family.GAUSSIAN: Link.IDENTITY,
    Family.GAMMA: Link.LOG,
    Family.BINOMIAL: Link.LOGIT,
    Family.POISSON: Link.LOG,
}


@dataclass(frozen=True)
class FamilySpec:
    family: Family
    link: Link

    def __post_init__(self):
        if _CANONICAL[self.family] is not self.link:
            raise FormulaError(
                f"unsupported family/link pair {self.family.value}/{self.link.value}; "
                f"{self.family.value} requires link={_CANONICAL[self.family].value}"
            )

    @property
    def has_scale(self) -> bool:
        return self.family in (Family.GAUSSIAN, Family.GAMMA)

    def linkfun(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.link is Link.IDENTITY:
            return mu.copy()
        if self.link is Link.LOG:
            return np.log(mu)
        return np.log(mu / (1.0 - mu))

    def linkinv(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.link is Link.IDENTITY:
            return eta.copy()
        if self.link is Link.LOG:
            return np.exp(eta)
        return 1.0 / (1.0 + np.exp(-eta))

    def mu_eta(self, mu):
        """Derivative of the link, g'(mu)."""
        mu = np.asarray(mu, dtype=float)
        if self.link is Link.IDENTITY:
            return np.ones_like(mu)
        if self.link is Link.LOG:
            return 1.0 / mu
        return 1.0 / (mu * (1.0 - mu))

    def variance(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.family is Family.GAUSSIAN:
            return np.ones_like(mu)
        if self.family is Family.GAMMA:
            return mu**2
        if self.family is Family.POISSON:
            return mu.copy()
        return mu * (1.0 - mu)

    def irls_weights(self, mu, prior_w=1.0):
        """Working weights w / (V(mu) g'(mu)^2)."""
        return prior_w / (self.variance(mu) * self.mu_eta(mu) ** 2)


def make_family(family: str, link: str | None = None) -> FamilySpec:
    """Build a :class:`FamilySpec` from names; the link defaults to the canonical one."""
    try:
        fam = Family(family.lower())
    except ValueError:
        raise FormulaError(f"unknown family {family!r}") from None
    if link is None:
        return FamilySpec(fam, _CANONICAL[fam])
    try:
        lnk = Link(link.lower())
    except ValueError:
        raise FormulaError(f"unknown link {link!r}") from None
    return FamilySpec(fam, lnk)


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<name>[A-Za-z.][A-Za-z0-9._]*)
  | (?P<int>[0-9]+)
  | (?P<op>[~+\-(),=])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str  # name | int | op | eof
    text: str
    offset: int  # byte offset


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    byte = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FormulaError(f"unexpected character {text[pos]!r}", byte)
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            if kind == "name" and chunk.startswith(".") and len(chunk) > 1 and chunk[1].isdigit():
                raise FormulaError(f"invalid name {chunk!r}", byte)
            toks.append(_Tok(kind, chunk, byte))
        byte += len(chunk.encode("utf-8"))
        pos = m.end()
    toks.append(_Tok("eof", "", byte))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> _Tok:
        tok = self.cur
        if tok.kind != kind or (text is not None and tok.text != text):
            want = what or (repr(text) if text else kind)
            got = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise FormulaError(f"expected {want}, found {got}", tok.offset)
        return self.advance()

    def parse(self) -> tuple[_Tok, list[tuple[object, int]]]:
        resp = self.expect("name", what="response name")
        self.expect("op", "~")
        terms = [self.term()]
        while self.cur.kind == "op" and self.cur.text == "+":
            self.advance()
            terms.append(self.term())
        if self.cur.kind != "eof":
            tok = self.cur
            if tok.kind == "op" and tok.text == "-":
                raise FormulaError("term removal with '-' is not supported", tok.offset)
            raise FormulaError(f"expected '+' or end of input, found {tok.text!r}", tok.offset)
        return resp, terms

    def term(self):
        tok = self.cur
        if tok.kind == "op" and tok.text == "-":
            raise FormulaError("intercept suppression ('-1') is not supported", tok.offset)
        if tok.kind == "int":
            raise FormulaError("explicit intercept terms are not supported", tok.offset)
        name = self.expect("name", what="term")
        if not (self.cur.kind == "op" and self.cur.text == "("):
            return (name.text, name.offset)
        if name.text not in ("s", "te"):
            raise FormulaError(f"unknown function {name.text!r}", name.offset)
        self.advance()
        return (self.call(name), name.offset)

    def call(self, fn: _Tok) -> SmoothSpec:
        kind = SmoothKind(fn.text)
        variables: list[str] = []
        k: int | None = None
        while True:
            tok = self.cur
            if tok.kind == "name" and self.toks[self.i + 1].kind == "op" and self.toks[self.i + 1].text == "=":
                if tok.text != "k":
                    raise FormulaError(f"unknown argument {tok.text!r} to {fn.text}()", tok.offset)
                if k is not None:
                    raise FormulaError("argument 'k' given twice", tok.offset)
                self.advance()
                self.advance()
                val = self.expect("int", what="integer value for k")
                k = int(val.text)
                if k < MIN_K:
                    raise FormulaError(f"k={k} below minimum {MIN_K}", val.offset)
            elif tok.kind == "name":
                if k is not None:
                    raise FormulaError("positional argument after k=", tok.offset)
                variables.append(self.advance().text)
            else:
                got = "end of input" if tok.kind == "eof" else repr(tok.text)
                raise FormulaError(f"expected variable name, found {got}", tok.offset)
            if self.cur.kind == "op" and self.cur.text == ",":
                self.advance()
                continue
            break
        self.expect("op", ")")
        want = 1 if kind is SmoothKind.S else 2
        if len(variables) != want:
            raise FormulaError(
                f"{fn.text}() takes {want} variable(s), got {len(variables)}", fn.offset
            )
        if len(set(variables)) != len(variables):
            raise FormulaError(f"repeated variable in {fn.text}()", fn.offset)
        if k is None:
            k = DEFAULT_K_S if kind is SmoothKind.S else DEFAULT_K_TE
        return SmoothSpec(kind, tuple(variables), (k,) * want)


def parse_formula(text: str) -> FormulaAst:
    """Parse formula text into a :class:`FormulaAst`.

    Terms keep their source order within the parametric and smooth lists.
    Raises :class:`FormulaError` (with a byte offset where one applies) on any
    syntax error, unknown function or argument, ``k`` below 4, or a duplicated
    or confounded term.
    """
    if not text or not text.strip():
        raise FormulaError("empty formula", 0)
    resp, terms = _Parser(text).parse()

    parametric: list[str] = []
    smooths: list[SmoothSpec] = []
    seen_smooth: set[tuple[SmoothKind, frozenset[str]]] = set()
    for term, offset in terms:
        if isinstance(term, str):
            if term == resp.text:
                raise FormulaError(f"response {term!r} used as a predictor", offset)
            if term in parametric:
                raise FormulaError(f"duplicate term {term!r}", offset)
            parametric.append(term)
        else:
            if resp.text in term.variables:
                raise FormulaError(f"response {resp.text!r} used as a predictor", offset)
            key = (term.kind, frozenset(term.variables))
            if key in seen_smooth:
                raise FormulaError(f"duplicate term {term.label}", offset)
            seen_smooth.add(key)
            smooths.append(term)

    smooth_vars = {v for sm in smooths for v in sm.variables}
    for name, offset in ((t, o) for t, o in terms if isinstance(t, str)):
        if name in smooth_vars:
            raise FormulaError(
                f"variable {name!r} appears both as a parametric term and inside a smooth",
                offset,
            )
    return FormulaAst(resp.text, True, tuple(parametric), tuple(smooths))


def format_formula(ast: FormulaAst) -> str:
    """Render an AST back to formula text that re-parses to an equal AST."""
    terms = list(ast.parametric)
    for sm in ast.smooths:
        terms.append(f"{sm.kind.value}({', '.join(sm.variables)}, k={sm.k[0]})")
    return f"{ast.response} ~ {' + '.join(terms)}"


# ---------------------------------------------------------------------------
# validation against a dataset


@dataclass(frozen=True)
class ModelPlan:
    ast: FormulaAst
    column_index: dict[str, int] = field(hash=False)
    n: int
    n_coef: int


def validate_against_data(
    ast: FormulaAst, columns: Sequence[str], n: int, allow_overparam: bool = False
) -> ModelPlan:
    """Check that every variable exists and that the model is not over-parameterized."""
    index = {name: i for i, name in enumerate(columns)}
    for name in ast.variables:
        if name not in index:
            raise FormulaError(f"variable {name} not found")
    n_coef = ast.n_coef
    if n_coef >= n and not allow_overparam:
        raise FormulaError(f"{n_coef} coefficients for {n} rows")
    return ModelPlan(ast, {v: index[v] for v in ast.variables}, n, n_coef)
