"""Command line interface.

Exit codes: 0 success, 2 configuration or usage error, 3 sampler failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from mfabc import config as cfgmod
from mfabc import runner
from mfabc.errors import ConfigError, MetricUnavailable, MFABCError

log = logging.getLogger("mfabc")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _overrides(config: dict, args) -> dict:
    out = config["output"]
    if getattr(args, "replicates", None) is not None:
        out["replicates"] = args.replicates
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        out["threads"] = args.threads
    if getattr(args, "no_figures", False):
        out["figures"] = False
    return cfgmod.validate(config)


def _load(args, method=None) -> dict:
    return _overrides(cfgmod.load(args.config, method), args)


def cmd_run(args, method=None):
    config = _load(args, method)
    out = runner.run(config, args.out)
    print(f"wrote {out}")


def _run_or_load(source: str, out: Path, args) -> Path:
    path = Path(source)
    if path.is_dir():
        return path
    ns = argparse.Namespace(config=source, replicates=args.replicates, seed=args.seed, threads=args.threads,
                            no_figures=args.no_figures)
    return runner.run(_load(ns), out)


def cmd_compare(args):
    if len(args.config) != 2:
        raise ConfigError("compare needs exactly two --config values (files or run directories)",
                          field="--config")
    out = Path(args.out or "mfabc-compare")
    dir_a = _run_or_load(args.config[0], out / "a", args)
    dir_b = _run_or_load(args.config[1], out / "b", args)
    a, b = runner.load_summaries(dir_a), runner.load_summaries(dir_b)
    if args.metrics:
        metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    else:
        metrics = [m for m in runner.COMPARE_METRICS if all(s.get(m) is not None for s in a + b)]
    runner.compare(dir_a, dir_b, out, metrics)
    if not args.no_figures:
        from mfabc import plotting

        _, changes = runner.compare_rows(a, b, metrics)
        plotting.comparison_figure(out / "relative_change.png", changes)
    print(f"wrote {out / 'comparison.csv'} and {out / 'relative_change.csv'}")


def cmd_suitability(args):
    from mfabc.suitability import assess

    config = _overrides(cfgmod.load(args.config), args)
    s = config.get("suitability") or cfgmod.validate({**config, "suitability": {}})["suitability"]
    eps = s.get("eps", config["sampler"].get("eps_target"))
    if eps is None:
        raise ConfigError("missing required key", field="suitability.eps")
    pair, prior, _ = runner.build_model(config["model"], config["output"]["threads"])
    report = assess(pair, prior, eps, s["n0"], s["kappa"], s["n_lf"], s["n_hf"], config["output"]["seed"])
    out = Path(args.out or "suitability.json")
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "suitability.json"
    out.write_text(json.dumps(report, indent=2) + "\n")
    print(f"E = {report['E']:.4f} (range {report['E_lower']:.4f} to {report['E_upper']:.4f}); "
          f"lower values mean the LF model screens more precisely. Wrote {out}")


def cmd_verify(args):
    from mfabc import diagnostics as dg
    from mfabc.models.toy import toy_pair, toy_prior

    if args.config:
        config = cfgmod.load(args.config)
        v = config.get("verify") or cfgmod.validate({**config, "verify": {}})["verify"]
    else:
        v = cfgmod.validate({"model": {"name": "toy"}, "verify": {}})["verify"]
    seed = args.seed or 0
    sweep = []
    for eps in v["eps"]:
        for eps_lf in v["eps_lf"]:
            sweep.append({"eps": eps, "eps_lf": eps_lf, **dg.verify_prop2_bound(v["y_obs"], eps, eps_lf, v["n_lf"])})
    rates = []
    for eps_lf in v["eps_lf"]:
        r = dg.prefilter_rate(v["y_obs"], eps_lf, v["n_lf"], toy_pair(v["y_obs"]), toy_prior(), v["n_draws"], seed)
        r["eps_lf"] = eps_lf
        r["z"] = (r["monte_carlo"] - r["quadrature"]) / r["standard_error"]
        rates.append(r)
    report = {
        "y_obs": v["y_obs"],
        "n_lf": v["n_lf"],
        "l1_bound": {"all_hold": all(row["holds"] for row in sweep), "sweep": sweep},
        "prefilter_rate": {"all_within_3se": all(abs(r["z"]) <= 3 for r in rates), "values": rates},
        "bound_at_a_lf_target": dg.prop2_bound(v["a_lf_target"]),
    }
    out = Path(args.out or "verify.json")
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "verify.json"
    out.write_text(json.dumps(report, indent=2) + "\n")
    ok = report["l1_bound"]["all_hold"] and report["prefilter_rate"]["all_within_3se"]
    print(f"L1 bound holds on {len(sweep)} points: {report['l1_bound']['all_hold']}; "
          f"pre-filter rate within 3 SE: {report['prefilter_rate']['all_within_3se']}. Wrote {out}")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_gen_observed(args):
    from mfabc.models import kuramoto, ou

    config = cfgmod.load(args.config)
    model = config["model"]
    if args.seed is not None:
        model["observed_seed"] = args.seed
        model.pop("observed_file", None)
    name = model["name"]
    out = Path(args.out or f"observed_{name}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if name == "ou":
            x = runner.observed_data(model)
            t = np.arange(x.size) * ou.DT * ou.RECORD_EVERY
            w.writerow(["t", "x"])
            w.writerows([[repr(float(a)), repr(float(b))] for a, b in zip(t, x)])
        elif name == "kuramoto":
            R, Phi = runner.observed_data(model)
            w.writerow(["t", "R", "Phi"])
            w.writerows([[repr(float(a)), repr(float(b)), repr(float(c))]
                         for a, b, c in zip(kuramoto.TIMES, R, Phi)])
        else:
            w.writerow(["y"])
            w.writerow([repr(float(model["y_obs"]))])
    print(f"wrote {out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfabc", description="Multifidelity ABC with LF pre-filtering.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="TOML or JSON config, or a manifest.json")
        sp.add_argument("--out", help="output directory or file")
        sp.add_argument("--replicates", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--no-figures", action="store_true", help="skip PNG output")

    for name, helptext in [("run", "run the sampler named in the config"),
                           ("asmc", "run baseline adaptive ABC-SMC"),
                           ("maps", "run adaptive pre-filtering multifidelity SMC"),
                           ("is", "run pre-filtering importance sampling")]:
        common(sub.add_parser(name, help=helptext))
    cp = sub.add_parser("compare", help="compare two runs (configs or finished run directories)")
    cp.add_argument("--config", action="append", required=True, help="give twice: run A then run B")
    cp.add_argument("--out")
    cp.add_argument("--metrics", help=f"comma-separated subset of {','.join(runner.COMPARE_METRICS)}")
    cp.add_argument("--replicates", type=int)
    cp.add_argument("--seed", type=int)
    cp.add_argument("--threads", type=int)
    cp.add_argument("--no-figures", action="store_true")
    common(sub.add_parser("suitability", help="assess an LF model as a pre-filter"))
    common(sub.add_parser("verify", help="numerical checks of the error bound and pre-filter rate"),
           config_required=False)
    common(sub.add_parser("gen-observed", help="write synthetic observed data as CSV"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "run": cmd_run,
        "asmc": lambda a: cmd_run(a, "asmc"),
        "maps": lambda a: cmd_run(a, "maps"),
        "is": lambda a: cmd_run(a, "is"),
        "compare": cmd_compare,
        "suitability": cmd_suitability,
        "verify": cmd_verify,
        "gen-observed": cmd_gen_observed,
    }
    try:
        code = handlers[args.command](args)
    except (ConfigError, MetricUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MFABCError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"sampler error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
