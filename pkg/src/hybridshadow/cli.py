"""Command-line entry point: dataset sampling, estimation, sweeps, oracles.

Subcommands
-----------
``sample``
    Sample the dataset(s) of one sweep task and write them as JSON-lines
    record files.  Plans that need two datasets (e.g. HR/o4) write the second
    one next to ``--out`` with a ``.1`` suffix.
``estimate``
    Load record file(s) and run the configured estimator, printing the
    estimate, exact oracle value, and bootstrap standard error.  With
    ``--out`` the result is also written as a one-row CSV.
``sweep``
    Run the full configured experiment and write the results CSV.
``oracle``
    Run the exact-enumeration unbiasedness suite; exits nonzero on failure.

All subcommands take ``--config <path>`` pointing at a flat ``key = value``
file (see :mod:`hybridshadow.experiments` for the key list).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import experiments as exp
from .circuits import write_records

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridshadow",
        description="Hybrid swap-test/randomized-measurement estimation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, seed: bool = True) -> None:
        p.add_argument("--config", required=True, help="flat key = value config file")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_sample = sub.add_parser("sample", help="sample one task's dataset(s) to record files")
    add_common(p_sample)
    p_sample.add_argument("--out", required=True, help="output record file (JSON lines)")
    p_sample.add_argument("--protocol", choices=exp.PROTOCOLS, default=None,
                          help="protocol (default: first in config)")
    p_sample.add_argument("--n", type=int, default=None, help="qubit count (default: first in config)")
    p_sample.add_argument("--trial", type=int, default=0, help="trial index (default 0)")

    p_est = sub.add_parser("estimate", help="estimate from sampled record file(s)")
    add_common(p_est, seed=False)
    p_est.add_argument("--records", required=True, nargs="+",
                       help="record file(s), in circuit-plan order")
    p_est.add_argument("--protocol", choices=exp.PROTOCOLS, default=None,
                       help="protocol (default: first in config)")
    p_est.add_argument("--n", type=int, default=None,
                       help="qubit count (default: inferred from the records)")
    p_est.add_argument("--out", default=None, help="optional one-row results CSV")

    p_sweep = sub.add_parser("sweep", help="run the full configured experiment")
    add_common(p_sweep)
    p_sweep.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    p_sweep.add_argument("--out", default=None, help="results CSV (default: config 'out')")

    p_oracle = sub.add_parser("oracle", help="run the exact-enumeration oracle suite")
    p_oracle.add_argument("--max-n", type=int, default=2, help="largest qubit count (1 or 2)")

    return parser


def _load_config(args: argparse.Namespace) -> exp.ExperimentConfig:
    config = exp.ExperimentConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    return config


def _cmd_sample(args: argparse.Namespace) -> int:
    config = _load_config(args)
    protocol = args.protocol or config.protocols[0]
    n = args.n if args.n is not None else config.n_values[0]
    datasets, _ = exp.sample_trial(config, protocol, n, args.trial)
    for idx, records in enumerate(datasets):
        path = args.out if idx == 0 else f"{args.out}.{idx}"
        write_records(path, records)
        print(f"wrote {len(records)} {records[0].family.value} records to {path}")
    return 0


def _infer_n(records, args: argparse.Namespace, config: exp.ExperimentConfig) -> int:
    if args.n is not None:
        return args.n
    first = records[0]
    if first.b is not None:
        return first.b.n
    # swap-test records carry no register outcome; fall back to the config
    return config.n_values[0]


def _cmd_estimate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    protocol = args.protocol or config.protocols[0]
    datasets = [exp.import_dataset(path) for path in args.records]
    if not datasets or not datasets[0]:
        raise ValueError("empty record file")
    n = _infer_n(datasets[0], args, config)
    report, exact = exp.estimate_from_records(config, protocol, datasets, n)
    estimate = float(report.value)
    print(
        f"{protocol} {config.quantity} n={n}: estimate={estimate!r} exact={exact!r} "
        f"abs_error={abs(estimate - exact)!r} std_error={report.std_error!r} "
        f"(M={report.n_settings}, K={report.k_shots})"
    )
    if args.out is not None:
        row = exp.ResultRow(
            protocol=protocol,
            quantity=config.quantity,
            n=n,
            d=2**n,
            m_settings=report.n_settings,
            k_shots=report.k_shots,
            trial=0,
            estimate=estimate,
            exact=exact,
            abs_error=abs(estimate - exact),
            std_error=report.std_error,
            wall_time=0.0,
            seed=datasets[0][0].seed,
        )
        exp.export_csv([row], args.out)
        print(f"wrote 1 row to {args.out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out = args.out if args.out is not None else config.out
    if out is None:
        raise ValueError("no output path: pass --out or set 'out' in the config")
    rows = exp.run_experiment(config, threads=args.threads)
    exp.export_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")
    for protocol in config.protocols:
        ns, errors = exp.rms_error_series(rows, protocol)
        series = ", ".join(f"n={n}: {err:.4g}" for n, err in zip(ns, errors))
        print(f"  {protocol} rms error — {series}")
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    report = exp.run_oracle_suite(args.max_n)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


_COMMANDS = {
    "sample": _cmd_sample,
    "estimate": _cmd_estimate,
    "sweep": _cmd_sweep,
    "oracle": _cmd_oracle,
}


def main(argv: "list[str] | None" = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
