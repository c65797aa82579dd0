"""Shared synthetic datasets and small model builders."""

from __future__ import annotations

import numpy as np
import pytest

from smoothforge.assemble import assemble_design
from smoothforge.formula import make_family, parse_formula
from smoothforge.options import CodegenOptions


def gamma_toy(n=400, seed=1):
    """Data in the shape of the four-covariate gamma example."""
    rng = np.random.default_rng(seed)
    x0, x1, x2, x3 = rng.uniform(size=(4, n))
    eta = 0.5 + np.sin(2 * np.pi * x0) + 0.8 * x1 * x2 + 0.5 * x3
    y = rng.gamma(2.0, np.exp(eta) / 2.0)
    return {"y": y, "x0": x0, "x1": x1, "x2": x2, "x3": x3}


def union_toy(n=534, seed=2):
    """Binary membership against a skewed wage covariate."""
    rng = np.random.default_rng(seed)
    wage = np.round(rng.gamma(4.0, 2.3, size=n), 2)
    p = 1.0 / (1.0 + np.exp(-(-2.0 + 0.25 * wage - 0.006 * wage**2)))
    return {"union.member": (rng.uniform(size=n) < p).astype(float), "wage": wage}


def sitka_toy(n_trees=40, seed=3):
    """Repeated growth measurements with a treatment indicator."""
    rng = np.random.default_rng(seed)
    days = np.array([152, 174, 201, 227, 258, 469, 496, 528, 556, 579, 613, 639, 674], dtype=float)
    rows = []
    for tree in range(n_trees):
        ozone = float(tree % 3 != 0)
        d = rng.normal(0, 0.3)
        for t in days:
            rows.append((2 + 4 / (1 + np.exp(-(t - 300) / 100)) - 0.2 * ozone + d + rng.normal(0, 0.1), t, ozone))
    a = np.array(rows)
    return {"log.size": a[:, 0], "days": a[:, 1], "ozone": a[:, 2]}


def sine_toy(n=200, sigma=0.2, seed=4):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=n)
    return {"y": np.sin(2 * np.pi * x) + rng.normal(0, sigma, n), "x": x}


def build(formula, data, family="gaussian", link=None, **opts):
    weights = opts.pop("weights", None)
    return assemble_design(parse_formula(formula), data, make_family(family, link),
                           CodegenOptions(**opts), weights=weights)


def write_csv(path, data):
    names = list(data)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*(data[k] for k in names)):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


@pytest.fixture(scope="session")
def gamma_prefit():
    return build("y ~ s(x0) + te(x1,x2) + s(x3)", gamma_toy(), "gamma", "log")


@pytest.fixture(scope="session")
def union_prefit():
    return build("union.member ~ s(wage, k=20)", union_toy(), "binomial")


@pytest.fixture(scope="session")
def sitka_prefit():
    return build("log.size ~ s(days) + ozone", sitka_toy(), diagonalize=True)


@pytest.fixture(scope="session")
def sine_prefit():
    return build("y ~ s(x, k=20)", sine_toy(), diagonalize=True)


# ---------------------------------------------------------------------------
# acceptance report: one PASS/FAIL line per criterion

_ACCEPTANCE: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None or call.when not in ("setup", "call"):
        return
    number, title = mark.args
    ok = call.excinfo is None
    if call.when == "setup" and ok:
        return
    prev = _ACCEPTANCE.get(number, (title, True))[1]
    _ACCEPTANCE[number] = (title, prev and ok)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}")
