"""Command-line front end: fit, gibbs, intervals, simulate, study, accuracy.

Every command funnels all randomness through one ``--seed`` flag (substreams
are derived by labeled hashing), writes its outputs into ``--out`` (or the
``SEMVB_OUT_DIR`` environment default), and drops a ``manifest.json`` with
the resolved options and input hashes. ``semvb rerun --manifest M`` replays
a recorded command. Re-running with the same inputs and seed reproduces the
outputs byte-for-byte, excluding wall-clock fields.

Exit codes: 0 success, 1 usage/validation/IO error, 2 completed with
warnings (non-convergence, dropped replicates).
"""

import argparse
import datetime
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .gibbs import ChainConfig, chain_summary, gibbs_multi, gibbs_single
from .mfvb import FitReport, fit, point_estimates
from .model import FactorSpec, Hyperparameters, TrueParameters, load_csv, simulate
from ._rng import substream
from .resample import (
    BootstrapConfig,
    bootstrap_replicates,
    intervals_from_replicates,
    intervals_to_frame,
    jackknife_intervals,
    mfvb_intervals,
)
from .studies import StudyConfig, density_figure_export, run_study

# json keys whose values change run to run (clocks) or with the output
# location (self-referential paths); stripped before hashing outputs
VOLATILE_KEYS = ("wall_time", "started", "finished", "argv", "out")
VOLATILE_FILES = ("timing.csv",)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARN = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.prog + ": error: " + message)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return "sha256:" + h.hexdigest()


def _strip_volatile(doc):
    if isinstance(doc, dict):
        return {
            k: _strip_volatile(v) for k, v in doc.items() if k not in VOLATILE_KEYS
        }
    if isinstance(doc, list):
        return [_strip_volatile(v) for v in doc]
    return doc


def output_digest(out_dir) -> str:
    """Content hash of an output directory, excluding wall-clock artifacts."""
    h = hashlib.sha256()
    root = Path(out_dir)
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        if path.name in VOLATILE_FILES:
            continue
        h.update(str(path.relative_to(root)).encode())
        if path.suffix == ".json":
            with open(path, "r", encoding="utf-8") as fh:
                doc = _strip_volatile(json.load(fh))
            h.update(json.dumps(doc, sort_keys=True).encode())
        else:
            h.update(path.read_bytes())
    return h.hexdigest()


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("SEMVB_OUT_DIR")
    if not out:
        raise ValueError("no output directory: pass --out or set SEMVB_OUT_DIR")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


class _Manifest:
    def __init__(self, command, args, input_paths):
        self.doc = {
            "command": command,
            "argv": list(args._argv),
            "options": {
                k: v for k, v in sorted(vars(args).items()) if not k.startswith("_")
            },
            "inputs": {str(p): _sha256(p) for p in input_paths if p},
            "seed": getattr(args, "seed", None),
            "version": __version__,
            "started": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }

    def write(self, out_dir):
        self.doc["finished"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        with open(Path(out_dir) / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(self.doc, fh, indent=1, default=str)


def _load_inputs(args):
    spec = FactorSpec.from_json(args.spec)
    data = load_csv(args.data, spec)
    hyper = Hyperparameters.from_json(args.hyper) if args.hyper else None
    return data, hyper


def _write_point_estimates(report: FitReport, path):
    est = point_estimates(report)
    pd.DataFrame(
        {"parameter": list(est.keys()), "estimate": list(est.values())}
    ).to_csv(path, index=False)


def cmd_fit(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("fit", args, [args.data, args.spec, args.hyper])
    data, hyper = _load_inputs(args)
    report = fit(data, hyper, tol=args.tol, max_iter=args.max_iter)
    report.save(out / "fit.json")
    _write_point_estimates(report, out / "point_estimates.csv")
    manifest.write(out)
    if not report.converged:
        print(
            f"warning: not converged after {report.iterations} sweeps "
            f"(relative error {report.final_relative_error:.3g})",
            file=sys.stderr,
        )
        return EXIT_WARN
    print(
        f"converged in {report.iterations} iterations "
        f"({report.wall_time:.3f} s); outputs in {out}"
    )
    return EXIT_OK


def cmd_gibbs(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("gibbs", args, [args.data, args.spec, args.hyper])
    data, hyper = _load_inputs(args)
    cfg = ChainConfig(
        iterations=args.iters,
        burn_in=args.burnin,
        chains=args.chains,
        thin=args.thin,
        seed=args.seed,
    )
    sampler = gibbs_single if data.spec.p == 1 else gibbs_multi
    draws = sampler(data, hyper, cfg, threads=args.threads)
    draws.to_frame().to_csv(out / "draws.csv", index=False)
    summary = intervals_to_frame(chain_summary(draws, args.alpha))
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary.to_dict(orient="records"), fh, indent=1)
    manifest.write(out)
    print(
        f"{cfg.chains} chain(s) x {draws.retained} retained draws; outputs in {out}"
    )
    return EXIT_OK


def cmd_intervals(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("intervals", args, [args.data, args.spec, args.hyper])
    data, hyper = _load_inputs(args)
    warn = False

    if args.method == "mcmc":
        cfg = ChainConfig(
            iterations=args.iters, burn_in=args.burnin,
            chains=args.chains, seed=args.seed,
        )
        sampler = gibbs_single if data.spec.p == 1 else gibbs_multi
        reports = chain_summary(
            sampler(data, hyper, cfg, threads=args.threads), args.alpha
        )
    elif args.method == "mfvb":
        base = fit(data, hyper, tol=args.tol, max_iter=args.max_iter)
        if not base.converged:
            raise ValueError("fit did not converge; no mfvb intervals")
        reports = mfvb_intervals(base, args.alpha)
    elif args.method == "jackknife":
        reports = jackknife_intervals(
            data, hyper, args.alpha,
            tol=args.tol, max_iter=args.max_iter, threads=args.threads,
        )
    else:
        cfg = BootstrapConfig(
            B=args.B, method=args.method, alpha=args.alpha,
            seed=args.seed, threads=args.threads,
        )
        reps = bootstrap_replicates(
            data, hyper, cfg, tol=args.tol, max_iter=args.max_iter
        )
        reports = intervals_from_replicates(reps, args.method, args.alpha)
        if reps.dropped:
            print(
                f"warning: dropped {len(reps.dropped)} non-convergent "
                f"replicate(s): {list(reps.dropped)}",
                file=sys.stderr,
            )
            warn = True

    frame = intervals_to_frame(reports)
    frame.to_csv(out / "intervals.csv", index=False)
    with open(out / "intervals.json", "w", encoding="utf-8") as fh:
        json.dump(frame.to_dict(orient="records"), fh, indent=1)
    manifest.write(out)
    print(f"{len(reports)} intervals ({args.method}); outputs in {out}")
    return EXIT_WARN if warn else EXIT_OK


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("simulate", args, [args.params, args.spec])
    spec = FactorSpec.from_json(args.spec)
    params = TrueParameters.from_json(args.params)
    data = simulate(params, spec, args.n, substream(args.seed, "simulate"))
    data.to_frame().to_csv(out / "data.csv", index=False)
    manifest.write(out)
    print(f"simulated {data.n} x {data.m} dataset; outputs in {out}")
    return EXIT_OK


def cmd_study(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("study", args, [args.config])
    cfg = StudyConfig.from_json(args.config)
    result = run_study(cfg, out_dir=out, threads=args.threads)
    manifest.write(out)
    dropped = len(result.failures)
    if dropped:
        print(f"warning: {dropped} replicate-method failures", file=sys.stderr)
        return EXIT_WARN
    print(f"study complete: {cfg.replicates} replicates; outputs in {out}")
    return EXIT_OK


def _load_draws_csv(path) -> dict:
    frame = pd.read_csv(path)
    return {
        c: frame[c].to_numpy(dtype=np.float64)
        for c in frame.columns
        if c not in ("chain", "draw")
    }


def cmd_accuracy(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("accuracy", args, [args.fit, args.draws])
    report = FitReport.load(args.fit)
    draws = _load_draws_csv(args.draws) if args.draws else None
    bundles = density_figure_export(
        report, draws=draws, parameters=args.params or None, out_dir=out
    )
    rows = [
        {"parameter": name, "accuracy_pct": frame["accuracy_pct"].iloc[0]}
        for name, frame in bundles.items()
    ]
    pd.DataFrame(rows).to_csv(out / "accuracy.csv", index=False)
    manifest.write(out)
    print(f"accuracy for {len(rows)} parameter(s); outputs in {out}")
    return EXIT_OK


def cmd_rerun(args) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    argv = list(doc["argv"])
    if args.out:
        if "--out" in argv:
            argv[argv.index("--out") + 1] = args.out
        else:
            argv += ["--out", args.out]
    return main(argv)


def _add_common(p, with_seed=True, with_threads=True):
    p.add_argument("--out", default=None, help="output directory (or SEMVB_OUT_DIR)")
    if with_seed:
        p.add_argument("--seed", type=int, default=0)
    if with_threads:
        p.add_argument(
            "--threads", type=int, default=os.cpu_count(),
            help="parallelism hint; results are independent of it",
        )


def build_parser() -> _Parser:
    parser = _Parser(prog="semvb", description=__doc__)
    parser.add_argument("--version", action="version", version=f"semvb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit via coordinate-ascent variational Bayes")
    p.add_argument("--data", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--hyper", default=None)
    p.add_argument("--tol", type=float, default=0.01)
    p.add_argument("--max-iter", type=int, default=10000, dest="max_iter")
    _add_common(p, with_seed=False, with_threads=False)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gibbs", help="run the conjugate Gibbs benchmark sampler")
    p.add_argument("--data", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--hyper", default=None)
    p.add_argument("--iters", type=int, default=15000)
    p.add_argument("--burnin", type=int, default=7500)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.05)
    _add_common(p)
    p.set_defaults(func=cmd_gibbs)

    p = sub.add_parser("intervals", help="credible intervals by any method")
    p.add_argument("--data", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--hyper", default=None)
    p.add_argument(
        "--method", required=True,
        choices=["mfvb", "percentile", "pivotal", "jackknife", "mcmc"],
    )
    p.add_argument("--B", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--tol", type=float, default=0.01)
    p.add_argument("--max-iter", type=int, default=10000, dest="max_iter")
    p.add_argument("--iters", type=int, default=15000, help="mcmc method only")
    p.add_argument("--burnin", type=int, default=7500, help="mcmc method only")
    p.add_argument("--chains", type=int, default=1, help="mcmc method only")
    _add_common(p)
    p.set_defaults(func=cmd_intervals)

    p = sub.add_parser("simulate", help="generate a dataset from true parameters")
    p.add_argument("--params", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--n", type=int, required=True)
    _add_common(p, with_threads=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="run a simulation study from a config file")
    p.add_argument("--config", required=True)
    _add_common(p, with_seed=False)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("accuracy", help="density accuracy of a fit vs MCMC draws")
    p.add_argument("--fit", required=True, help="fit.json from the fit command")
    p.add_argument("--draws", default=None, help="draws.csv from the gibbs command")
    p.add_argument("--params", nargs="*", default=None)
    _add_common(p, with_seed=False, with_threads=False)
    p.set_defaults(func=cmd_accuracy)

    p = sub.add_parser("rerun", help="replay a recorded manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rerun)

    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args._argv = argv
        return args.func(args)
    except SystemExit as err:
        if isinstance(err.code, str):
            print(err.code, file=sys.stderr)
            return EXIT_ERROR
        return 0 if err.code in (0, None) else EXIT_ERROR
    except (ValueError, OSError, RuntimeError, KeyError) as err:
        print(f"semvb: error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
