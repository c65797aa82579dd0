"""Command-line front end.

Subcommands: compile, sample, summarize, predict, plotdata.
Exit codes: 0 success, 2 user error (usage, formula, data, schema),
3 I/O error, 4 model not supported by the requested operation.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .assemble import assemble_design
from .codegen import audit_model_text, emit_data, emit_inits, emit_model
from .data import read_csv, write_csv
from .errors import CapabilityError, DataError, SmoothforgeError
from .formula import make_family, parse_formula
from .options import CodegenOptions, SpPrior
from .posterior import EdfMethod, load_summary, plot_data, predict, summarize
from .prefit_io import dumps_prefit, load_prefit
from .sampler import gibbs_run
from .samples_io import read_samples_csv, samples_csv_text

log = logging.getLogger("smoothforge")

EXIT_OK, EXIT_USER, EXIT_IO, EXIT_CAPABILITY = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USER)


def atomic_write(files: dict[Path, str]) -> None:
    """Write every file to a temporary sibling, then rename them all into place."""
    temps = []
    try:
        for path, text in files.items():
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            temps.append((tmp, path))
        for tmp, path in temps:
            os.replace(tmp, path)
        temps = []
    finally:
        for tmp, _ in temps:
            try:
                os.unlink(tmp)
            except OSError:
                pass


def _table_text(header, columns) -> str:
    buf = io.StringIO()
    write_csv(buf, header, columns)
    return buf.getvalue()


def _stem(out: Path) -> Path:
    return out.with_suffix("") if out.suffix else out


# ---------------------------------------------------------------------------


def cmd_compile(args) -> int:
    ast = parse_formula(args.formula)
    family = make_family(args.family, args.link)
    options = CodegenOptions(
        sp_prior=SpPrior(args.sp_prior),
        diagonalize=args.diagonalize,
        lo=args.sp_bounds[0],
        hi=args.sp_bounds[1],
    )
    table = read_csv(args.data)
    needed = ast.variables + ([args.weights] if args.weights else [])
    for name in needed:
        if name not in table.columns:
            raise DataError(f"variable {name} not found")
    data = table.to_numeric(dict.fromkeys(needed))
    prefit = assemble_design(
        ast, data, family, options, weights=args.weights, allow_overparam=args.allow_overparam
    )
    model = emit_model(prefit)
    problems = audit_model_text(model).problems(prefit.p, prefit.sp_count)
    if problems:  # pragma: no cover - generator invariant
        raise RuntimeError("emitted model failed its index audit: " + "; ".join(problems))

    out = Path(args.out)
    stem = _stem(out)
    paths = {
        "model": out,
        "data": Path(args.data_out or f"{stem}.data.dump"),
        "inits": Path(args.inits_out or f"{stem}.inits.dump"),
        "prefit": Path(args.prefit_out or f"{stem}.prefit.json"),
    }
    atomic_write(
        {
            paths["model"]: model,
            paths["data"]: emit_data(prefit),
            paths["inits"]: emit_inits(prefit),
            paths["prefit"]: dumps_prefit(prefit),
        }
    )
    print(f"formula     {prefit.formula}")
    print(f"family      {family.family.value} (link={family.link.value})")
    print(f"rows used   {prefit.n}")
    print(f"rows dropped {prefit.n_dropped}")
    print(f"p           {prefit.p}")
    print(f"sp_count    {prefit.sp_count}")
    for t in prefit.terms:
        lo, hi = t.coef_offset + 1, t.coef_offset + t.n_coef
        print(f"  {t.label:<16} b[{lo}:{hi}]  {t.n_lambda} smoothing parameter(s)")
    for key, path in paths.items():
        print(f"wrote {key:<7} {path}")
    return EXIT_OK


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SMOOTHFORGE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise SmoothforgeError(f"SMOOTHFORGE_SEED must be an integer, got {env!r}") from None
    return 1


def cmd_sample(args) -> int:
    prefit = load_prefit(args.prefit)
    if args.n_iter < 1 or args.thin < 1 or args.burn < 0 or args.chains < 1:
        raise SmoothforgeError("schedule must have n-iter >= 1, thin >= 1, burn >= 0, chains >= 1")
    monitors = ["b", "rho", "scale"] + (["mu"] if args.monitor_mu else [])
    store = gibbs_run(
        prefit,
        n_iter=args.n_iter,
        burn=args.burn,
        thin=args.thin,
        seed=_seed(args),
        monitors=monitors,
        chains=args.chains,
        backend=args.backend,
    )
    atomic_write({Path(args.out): samples_csv_text(store)})
    print(f"wrote {store.n_draws} draws ({args.chains} chain(s)) to {args.out}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    prefit = load_prefit(args.prefit)
    store = read_samples_csv(args.samples)
    summary = summarize(store, prefit, EdfMethod(args.edf_method))
    atomic_write({Path(args.out): json.dumps(summary.to_dict(), indent=1) + "\n"})
    print(f"draws       {summary.n_draws}")
    print(f"edf ({summary.edf_method.value}) total {summary.edf_total:.4f}")
    for label, v in summary.edf_term.items():
        print(f"  {label:<16} edf {v:.4f}")
    if summary.scale_hat is not None:
        print(f"scale       {summary.scale_hat:.6g}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _summary_for(args, prefit, store):
    if getattr(args, "summary", None):
        summary = load_summary(args.summary)
        if summary.b_hat.shape[0] != prefit.p:
            raise SmoothforgeError(
                f"summary has {summary.b_hat.shape[0]} coefficients but the prefit has p={prefit.p}"
            )
        return summary
    return summarize(store, prefit, EdfMethod(args.edf_method))


def cmd_predict(args) -> int:
    prefit = load_prefit(args.prefit)
    store = read_samples_csv(args.samples)
    summary = _summary_for(args, prefit, store)
    table = read_csv(args.newdata)
    needed = list(dict.fromkeys(list(prefit.parametric) + [v for t in prefit.terms for v in t.variables]))
    for name in needed:
        if name not in table.columns:
            raise SmoothforgeError(f"variable {name} not found in new data")
    newdata = table.to_numeric(needed)
    res = predict(
        prefit, summary, newdata, store=store, n_draws=args.draws,
        link_scale=not args.response_scale, clamp=not args.no_clamp,
    )
    atomic_write({Path(args.out): _table_text(res.header, res.columns)})
    print(f"wrote {len(res.columns[0]) if res.columns else 0} rows to {args.out}")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    prefit = load_prefit(args.prefit)
    store = read_samples_csv(args.samples)
    summary = _summary_for(args, prefit, store)
    res = plot_data(prefit, summary, args.term, args.grid)
    atomic_write({Path(args.out): _table_text(res.header, res.columns)})
    print(f"wrote {len(res.columns[0])} rows to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="smoothforge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"smoothforge {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("compile", help="write model, data, inits and prefit files")
    c.add_argument("--formula", required=True)
    c.add_argument("--family", default="gaussian", choices=["gaussian", "gamma", "binomial", "poisson"])
    c.add_argument("--link", default=None, choices=["identity", "log", "logit"])
    c.add_argument("--data", required=True, help="CSV file with a header row")
    c.add_argument("--out", required=True, help="model file path, e.g. test.jags")
    c.add_argument("--data-out")
    c.add_argument("--inits-out")
    c.add_argument("--prefit-out")
    c.add_argument("--weights", help="binomial trial-count column")
    c.add_argument("--diagonalize", action="store_true")
    c.add_argument("--sp-prior", default="gamma", choices=[s.value for s in SpPrior])
    c.add_argument("--sp-bounds", nargs=2, type=float, default=(-12.0, 12.0), metavar=("LO", "HI"))
    c.add_argument("--allow-overparam", action="store_true",
                   help="allow at least as many coefficients as rows")
    c.set_defaults(func=cmd_compile)

    s = sub.add_parser("sample", help="run the built-in conjugate Gibbs sampler")
    s.add_argument("--prefit", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--n-iter", type=int, default=10000)
    s.add_argument("--burn", type=int, default=0)
    s.add_argument("--thin", type=int, default=10)
    s.add_argument("--chains", type=int, default=1)
    s.add_argument("--seed", type=int, default=None, help="falls back to $SMOOTHFORGE_SEED, then 1")
    s.add_argument("--monitor-mu", action="store_true")
    s.add_argument("--backend", default="auto", choices=["auto", "cython", "python"])
    s.set_defaults(func=cmd_sample)

    def common(q):
        q.add_argument("--prefit", required=True)
        q.add_argument("--samples", required=True)
        q.add_argument("--out", required=True)
        q.add_argument("--edf-method", default="penalty", choices=[m.value for m in EdfMethod])

    q = sub.add_parser("summarize", help="posterior summary and EDF")
    common(q)
    q.set_defaults(func=cmd_summarize)

    q = sub.add_parser("predict", help="predictions with two-standard-error bands")
    common(q)
    q.add_argument("--summary", help="reuse a summary file instead of recomputing")
    q.add_argument("--newdata", required=True)
    q.add_argument("--draws", type=int, default=0, help="number of posterior curves")
    q.add_argument("--response-scale", action="store_true", help="apply the inverse link")
    q.add_argument("--no-clamp", action="store_true", help="error on covariates outside the training range")
    q.set_defaults(func=cmd_predict)

    q = sub.add_parser("plotdata", help="band data for one smooth term")
    common(q)
    q.add_argument("--summary")
    q.add_argument("--term", required=True)
    q.add_argument("--grid", type=int, default=100)
    q.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CapabilityError as exc:
        print(f"smoothforge: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (SmoothforgeError, ValueError) as exc:
        print(f"smoothforge: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except OSError as exc:
        print(f"smoothforge: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
