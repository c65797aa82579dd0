import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothforge.errors import FormulaError
from smoothforge.formula import (
    Family,
    FormulaAst,
    Link,
    SmoothKind,
    SmoothSpec,
    format_formula,
    make_family,
    parse_formula,
    validate_against_data,
)


def test_four_term_example():
    ast = parse_formula("y ~ s(x0) + te(x1, x2) + s(x3)")
    assert ast.response == "y"
    assert ast.intercept
    assert ast.parametric == ()
    assert ast.smooths == (
        SmoothSpec(SmoothKind.S, ("x0",), (10,)),
        SmoothSpec(SmoothKind.TE, ("x1", "x2"), (5, 5)),
        SmoothSpec(SmoothKind.S, ("x3",), (10,)),
    )
    assert [s.label for s in ast.smooths] == ["s(x0)", "te(x1,x2)", "s(x3)"]
    assert ast.n_coef == 43


def test_parametric_only():
    ast = parse_formula("y ~ x1")
    assert ast.parametric == ("x1",) and ast.smooths == ()


def test_dotted_names_and_k():
    ast = parse_formula("union.member ~ s(wage, k=20)")
    assert ast.response == "union.member"
    assert ast.smooths == (SmoothSpec(SmoothKind.S, ("wage",), (20,)),)


def test_whitespace_insensitive():
    a = parse_formula("y~s(x,k=12)+te(a,b)+z")
    b = parse_formula("  y  ~\n s( x , k = 12 ) +\tte(a ,b) + z ")
    assert a == b


def test_te_shared_k():
    ast = parse_formula("y ~ te(a, b, k=6)")
    assert ast.smooths[0].k == (6, 6)
    assert ast.smooths[0].n_coef == 35


@pytest.mark.parametrize(
    "text, fragment, offset",
    [
        ("y ~ s(x0", "expected ')'", 8),
        ("y ~ f(x)", "unknown function 'f'", 4),
        ("y ~ s(x, m=2)", "unknown argument 'm'", 9),
        ("y ~ s(x, k=3)", "k=3 below minimum 4", 11),
        ("y ~ x - 1", "not supported", 6),
        ("y ~ -1 + x", "intercept suppression", 4),
        ("y ~ 1 + x", "explicit intercept", 4),
        ("y ~ s(x, k=5, k=6)", "given twice", 14),
        ("y ~ te(x)", "takes 2 variable", 4),
        ("y ~ s(a, b)", "takes 1 variable", 4),
        ("y ~ te(a, a)", "repeated variable", 4),
        ("y ~ s(x) + s(x, k=12)", "duplicate term s(x)", 11),
        ("y ~ te(a,b) + te(b,a)", "duplicate term", 14),
        ("y ~ x + x", "duplicate term 'x'", 8),
        ("y ~ y", "used as a predictor", 4),
        ("y ~ x + s(x)", "both as a parametric", 4),
        ("y ~ x @ z", "unexpected character", 6),
        ("", "empty formula", 0),
        ("y ~ s(k=5, x)", "positional argument after k=", 11),
    ],
)
def test_errors_are_positioned(text, fragment, offset):
    with pytest.raises(FormulaError) as info:
        parse_formula(text)
    assert fragment in str(info.value)
    assert info.value.offset == offset
    assert f"(at byte {offset})" in str(info.value)


def test_offsets_are_bytes_not_characters():
    # non-ASCII is never a valid token, so the error points at its first byte
    with pytest.raises(FormulaError) as info:
        parse_formula("y ~ x + é")
    assert info.value.offset == 8
    # a no-break space is whitespace but takes two bytes
    with pytest.raises(FormulaError) as info:
        parse_formula("y ~\u00a0@")
    assert info.value.offset == 5


def test_family_pairs():
    assert make_family("gamma").link is Link.LOG
    assert make_family("binomial").link is Link.LOGIT
    assert make_family("poisson", "log").family is Family.POISSON
    assert make_family("gaussian").link is Link.IDENTITY
    with pytest.raises(ValueError):
        make_family("gamma", "identity")
    with pytest.raises(ValueError):
        make_family("weibull")


@pytest.mark.parametrize("family", ["gaussian", "gamma", "binomial", "poisson"])
def test_link_inverse_and_derivative(family):
    fam = make_family(family)
    mu = np.array([0.2, 0.5, 0.7]) if family == "binomial" else np.array([0.3, 1.0, 4.0])
    assert np.allclose(fam.linkinv(fam.linkfun(mu)), mu)
    h = 1e-6
    num = (fam.linkfun(mu + h) - fam.linkfun(mu - h)) / (2 * h)
    assert np.allclose(fam.mu_eta(mu), num, rtol=1e-6)


def test_validate_against_data():
    ast = parse_formula("y ~ s(x0) + te(x1,x2) + s(x3)")
    plan = validate_against_data(ast, ["y", "x0", "x1", "x2", "x3"], 200)
    assert plan.n_coef == 43
    assert plan.column_index == {"y": 0, "x0": 1, "x1": 2, "x2": 3, "x3": 4}
    with pytest.raises(FormulaError, match="variable wage not found"):
        validate_against_data(parse_formula("union.member ~ s(wage)"), ["union.member", "age"], 100)
    with pytest.raises(FormulaError, match="43 coefficients for 15 rows"):
        validate_against_data(ast, ["y", "x0", "x1", "x2", "x3"], 15)
    with pytest.raises(FormulaError, match="20 coefficients for 15 rows"):
        validate_against_data(parse_formula("y ~ s(x, k=20)"), ["y", "x"], 15)
    assert validate_against_data(ast, ["y", "x0", "x1", "x2", "x3"], 15, allow_overparam=True).n == 15


# ---------------------------------------------------------------------------
# properties

_names = st.from_regex(r"[A-Za-z][A-Za-z0-9._]{0,6}", fullmatch=True)


@st.composite
def formulas(draw):
    names = draw(st.lists(_names, min_size=2, max_size=9, unique=True))
    resp, pool = names[0], names[1:]
    terms = []
    i = 0
    while i < len(pool):
        kind = draw(st.sampled_from(["p", "s", "te"]))
        k = draw(st.integers(4, 25))
        if kind == "te" and i + 1 < len(pool):
            terms.append(SmoothSpec(SmoothKind.TE, (pool[i], pool[i + 1]), (k, k)))
            i += 2
        elif kind == "s":
            terms.append(SmoothSpec(SmoothKind.S, (pool[i],), (k,)))
            i += 1
        else:
            terms.append(pool[i])
            i += 1
    return FormulaAst(
        resp,
        True,
        tuple(t for t in terms if isinstance(t, str)),
        tuple(t for t in terms if not isinstance(t, str)),
    )


@given(formulas())
@settings(max_examples=300, deadline=None)
def test_round_trip(ast):
    assert parse_formula(format_formula(ast)) == ast


@given(st.text(alphabet=st.sampled_from(list("yx01sate(),=~+- k._é\t")), max_size=40))
@settings(max_examples=800, deadline=None)
def test_parser_is_total(text):
    try:
        ast = parse_formula(text)
    except FormulaError as exc:
        assert exc.offset is not None
        assert 0 <= exc.offset <= len(text.encode("utf-8"))
    else:
        assert parse_formula(format_formula(ast)) == ast


@given(st.text(max_size=30))
@settings(max_examples=300, deadline=None)
def test_parser_total_on_arbitrary_text(text):
    try:
        parse_formula(text)
    except FormulaError:
        pass
