"""Prefit persistence as a self-describing JSON document.

Layout (format tag ``smoothforge-prefit-v1``)::

    {
      "format": "smoothforge-prefit-v1",
      "formula": "y ~ s(x0, k=10) + ...",   # canonical re-parseable text
      "family": "gamma", "link": "log",
      "options": {"sp_prior": "gamma", "diagonalize": false, "lo": -12.0, "hi": 12.0},
      "weights_column": null, "n_dropped": 0, "sp_count": 7, "tau_init": null,
      "y": ARRAY, "w": ARRAY, "X": ARRAY,
      "lambda_init": ARRAY, "b_init": ARRAY, "se_init": ARRAY, "param_prior_tau": ARRAY,
      "terms": [
        {"label": "s(x0)", "variables": ["x0"], "coef_offset": 1, "n_coef": 9,
         "null_dim": 1,
         "knots": [{"degree": 3, "knots": ARRAY, "range": [lo, hi]}],
         "penalties": [{"label": ..., "rank": 8, "S": ARRAY}],
         "null_penalty": {"label": "null", "rank": 1, "S": ARRAY} | null,
         "centering": ARRAY,
         "reparam": {"U": ARRAY, "d": ARRAY} | null,
         "diag_groups": [[0, 8], [8, 9]]}
      ]
    }

``ARRAY`` is ``{"shape": [...], "data": [...]}`` with ``data`` flattened in
row-major order.  Floats are written with shortest round-trip repr, so a
save/load cycle is exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .assemble import Prefit
from .basis import KnotVector, PenaltyMatrix, Reparam, SmoothBlock
from .errors import SchemaError
from .formula import make_family, parse_formula
from .options import CodegenOptions, SpPrior

FORMAT_TAG = "smoothforge-prefit-v1"


def _arr(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def _unarr(d) -> np.ndarray:
    try:
        return np.asarray(d["data"], dtype=float).reshape(d["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed array entry: {exc}") from None


def _pen(p: PenaltyMatrix | None):
    if p is None:
        return None
    return {"label": p.label, "rank": p.rank, "S": _arr(p.S)}


def _unpen(d) -> PenaltyMatrix | None:
    if d is None:
        return None
    return PenaltyMatrix(_unarr(d["S"]), int(d["rank"]), d["label"])


def prefit_to_dict(pf: Prefit) -> dict:
    terms = []
    for t in pf.terms:
        terms.append(
            {
                "label": t.label,
                "variables": list(t.variables),
                "coef_offset": t.coef_offset,
                "n_coef": t.n_coef,
                "null_dim": t.null_dim,
                "knots": [
                    {"degree": kv.degree, "knots": _arr(kv.knots), "range": list(kv.data_range)}
                    for kv in t.knots
                ],
                "penalties": [_pen(p) for p in t.penalties],
                "null_penalty": _pen(t.null_penalty),
                "centering": None if t.centering is None else _arr(t.centering),
                "reparam": None if t.reparam is None else {"U": _arr(t.reparam.U), "d": _arr(t.reparam.d)},
                "diag_groups": [list(g) for g in t.diag_groups],
            }
        )
    return {
        "format": FORMAT_TAG,
        "formula": pf.formula,
        "family": pf.family.family.value,
        "link": pf.family.link.value,
        "options": {
            "sp_prior": pf.options.sp_prior.value,
            "diagonalize": pf.options.diagonalize,
            "lo": pf.options.lo,
            "hi": pf.options.hi,
        },
        "weights_column": pf.weights_column,
        "n_dropped": pf.n_dropped,
        "sp_count": pf.sp_count,
        "tau_init": pf.tau_init,
        "y": _arr(pf.y),
        "w": _arr(pf.w),
        "X": _arr(pf.X),
        "lambda_init": _arr(pf.lambda_init),
        "b_init": _arr(pf.b_init),
        "se_init": _arr(pf.se_init),
        "param_prior_tau": _arr(pf.param_prior_tau),
        "terms": terms,
    }


def prefit_from_dict(d: dict) -> Prefit:
    if d.get("format") != FORMAT_TAG:
        raise SchemaError(f"not a prefit file (format tag {d.get('format')!r}, expected {FORMAT_TAG!r})")
    try:
        ast = parse_formula(d["formula"])
        family = make_family(d["family"], d["link"])
        o = d["options"]
        options = CodegenOptions(SpPrior(o["sp_prior"]), bool(o["diagonalize"]), float(o["lo"]), float(o["hi"]))
        X = _unarr(d["X"])
        terms = []
        for td in d["terms"]:
            off, nc = int(td["coef_offset"]), int(td["n_coef"])
            rep = td["reparam"]
            terms.append(
                SmoothBlock(
                    label=td["label"],
                    variables=tuple(td["variables"]),
                    X=X[:, off : off + nc],
                    penalties=tuple(_unpen(p) for p in td["penalties"]),
                    null_dim=int(td["null_dim"]),
                    knots=tuple(
                        KnotVector(int(k["degree"]), _unarr(k["knots"]), tuple(map(float, k["range"])))
                        for k in td["knots"]
                    ),
                    centering=None if td["centering"] is None else _unarr(td["centering"]),
                    reparam=None if rep is None else Reparam(_unarr(rep["U"]), _unarr(rep["d"])),
                    diag_groups=tuple(tuple(int(v) for v in g) for g in td["diag_groups"]),
                    coef_offset=off,
                    null_penalty=_unpen(td["null_penalty"]),
                )
            )
        n_par = 1 + len(ast.parametric)
        return Prefit(
            ast=ast,
            family=family,
            options=options,
            y=_unarr(d["y"]),
            w=_unarr(d["w"]),
            X=X,
            terms=tuple(terms),
            parametric=tuple(ast.parametric),
            parametric_idx=np.arange(n_par),
            sp_count=int(d["sp_count"]),
            lambda_init=_unarr(d["lambda_init"]),
            b_init=_unarr(d["b_init"]),
            se_init=_unarr(d["se_init"]),
            param_prior_tau=_unarr(d["param_prior_tau"]),
            tau_init=None if d["tau_init"] is None else float(d["tau_init"]),
            n_dropped=int(d["n_dropped"]),
            weights_column=d["weights_column"],
        )
    except KeyError as exc:
        raise SchemaError(f"prefit file is missing field {exc}") from None


def dumps_prefit(pf: Prefit) -> str:
    return json.dumps(prefit_to_dict(pf)) + "\n"


def save_prefit(pf: Prefit, path: str | Path) -> None:
    Path(path).write_text(dumps_prefit(pf), encoding="utf-8")


def load_prefit(path: str | Path) -> Prefit:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return prefit_from_dict(d)
