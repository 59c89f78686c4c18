"""Command-line front end.

Subcommands: ``simulate``, ``test``, ``fit``, ``mc``, ``prep-ar``.  Settings
come from an optional flat JSON ``--config``; any flag given on the command
line overrides the matching config key.  Exit codes: 0 success, 2 bad
configuration, 3 bad data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys

import numpy as np

from . import harness, io
from .core import Family, Series
from .errors import ConfigError, IngestionError, PlsimError
from .estimate import profile_ls_fit, variance_ls_fit
from .simulate import Preset, simulate

log = logging.getLogger("plsimel")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _strings(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in _strings(text)]


def _common(p):
    p.add_argument("--config", help="flat JSON settings file")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("-v", "--verbose", action="store_true")


def _model_flags(p):
    p.add_argument("--family", choices=["PLSIM", "CHPLSIM"])
    p.add_argument("--d-x", dest="d_X", type=int)
    p.add_argument("--d-w", dest="d_W", type=int)
    p.add_argument("--identification", choices=["FixFirst", "UnitNorm"])
    p.add_argument("--variance-form", choices=["ArchLag1", "LogSquare"])
    p.add_argument("--bandwidth-rule", choices=["ScaledRate", "Manual"])
    p.add_argument("--h", type=float, help="manual bandwidth")


def _design_flags(p):
    p.add_argument("--preset", choices=[v.value for v in Preset])
    p.add_argument("--burn-in", type=int)
    p.add_argument("--rho-w", type=float)
    p.add_argument("--rho0", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plsimel", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a path and write it as CSV")
    _common(p)
    _design_flags(p)
    p.add_argument("--n", type=int)
    p.add_argument("--innovation", choices=["Gaussian", "Uniform", "Mixture"])
    p.add_argument("--stream", type=int)

    p = sub.add_parser("test", help="Wilks test of a fixed parameter on a CSV series")
    _common(p)
    _model_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--gamma1", type=_floats)
    p.add_argument("--gamma2-free", type=_floats)
    p.add_argument("--beta", type=_floats)

    p = sub.add_parser("fit", help="profile least-squares fit on a CSV series")
    _common(p)
    _model_flags(p)
    p.add_argument("--data", required=True)

    p = sub.add_parser("mc", help="Monte Carlo rejection rates")
    _common(p)
    _design_flags(p)
    p.add_argument("--test", type=_strings, help="comma list of named tests")
    p.add_argument("--innovation", type=_strings, help="comma list of innovation laws")
    p.add_argument("--n", type=_ints, help="comma list of sample sizes")
    p.add_argument("--eta-mode", type=_strings, help="comma list of Estim, Ref")
    p.add_argument("--replications", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--train-size", type=int)
    p.add_argument("--skip-errors", action="store_true", default=None)
    p.add_argument("--timing", action="store_true", help="append a wall_time column")

    p = sub.add_parser("prep-ar", help="turn an observed AR series into a PLSIM CSV")
    _common(p)
    p.add_argument("--data", required=True, help="CSV with columns r, w1..w{d}")
    return parser


_NOT_CONFIG = {"command", "config", "out", "verbose", "data", "timing"}


def merged_config(args) -> dict:
    cfg = io.load_config(args.config)
    for key, value in vars(args).items():
        if key in _NOT_CONFIG or value is None:
            continue
        cfg[key] = value
    return cfg


def _cmd_simulate(args, cfg):
    design = io.design_from_config(cfg)
    path = simulate(design)
    if design.preset is Preset.SUPB2:
        # only R is observable; prep-ar turns it into a PLSIM series
        w = path.series.w
        header = ["r"] + [f"w{k + 1}" for k in range(w.shape[1])]
        io.write_text(io.format_csv(header, [path.r, w]), args.out)
    else:
        io.write_series_csv(path.series, args.out)


def _cmd_test(args, cfg):
    spec = io.spec_from_config(cfg)
    theta = io.theta_from_config(cfg, spec)
    res = harness.test_csv(args.data, spec, theta, io.kernel_from_config(cfg))
    io.write_text(harness.render_result(res), args.out)


def _cmd_fit(args, cfg):
    spec = io.spec_from_config(cfg)
    series = io.read_series_csv(args.data, spec)
    init = None
    if "gamma1" in cfg and "gamma2_free" in cfg:
        init = io.theta_from_config({**cfg, "beta": [0.0] * spec.d_beta}, spec)
    fit = profile_ls_fit(series, spec, io.kernel_from_config(cfg), init)
    theta = fit.theta_hat
    out = {**spec.to_dict(), **theta.to_dict()}
    if spec.family is Family.CHPLSIM:
        out["beta"] = variance_ls_fit(fit.residuals, series.y, spec).tolist()
    out.update(sse=fit.sse, evaluations=fit.iterations, converged=fit.converged)
    io.write_text(json.dumps(out, indent=2) + "\n", args.out)


def _as_list(v):
    return v if isinstance(v, list) else [v]


def _cmd_mc(args, cfg):
    base = {k: v for k, v in cfg.items() if k in io.DESIGN_KEYS and k not in ("n", "innovation")}
    configs = []
    for test, innov, n, mode in itertools.product(
        _as_list(cfg.get("test", "Lag1")),
        _as_list(cfg.get("innovation", "Gaussian")),
        _as_list(cfg.get("n", 2000)),
        _as_list(cfg.get("eta_mode", "Estim")),
    ):
        design = io.design_from_config({**base, "n": n, "innovation": innov})
        try:
            configs.append(
                harness.ExperimentConfig(
                    design,
                    test=test,
                    replications=cfg.get("replications", 1000),
                    alpha=cfg.get("alpha", 0.05),
                    eta_mode=mode,
                    train_size=cfg.get("train_size", 10_000),
                    workers=cfg.get("workers", 1),
                    skip_errors=bool(cfg.get("skip_errors", False)),
                    kernel=io.kernel_from_config(cfg),
                )
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
    report = harness.run_grid(configs)
    io.write_text(report.to_tsv(timing=args.timing), args.out)


def _cmd_prep_ar(args, cfg):
    cols = io.read_table(args.data)
    if "r" not in cols:
        raise IngestionError("prep-ar input needs an 'r' column", row=0)
    w_names = sorted((c for c in cols if c.startswith("w")), key=lambda c: int(c[1:]))
    if len(w_names) < 2:
        raise IngestionError("prep-ar input needs at least two w columns", row=0)
    prep = harness.prep_observed_ar(cols["r"])
    w = np.column_stack([cols[c] for c in w_names])[prep.start :]
    print(f"rho_tilde\t{prep.rho_tilde!r}", file=sys.stderr)
    io.write_series_csv(Series(prep.y, prep.x, w), args.out)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "test": _cmd_test,
    "fit": _cmd_fit,
    "mc": _cmd_mc,
    "prep-ar": _cmd_prep_ar,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = merged_config(args)
        _COMMANDS[args.command](args, cfg)
    except PlsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
