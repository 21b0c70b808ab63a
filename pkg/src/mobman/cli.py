"""Command-line front end.

    mobman run <config.json> [--out DIR]          one scenario -> CSV + summary
    mobman ablate <spec.json> [--out DIR]         controller grid -> tables
    mobman validate-coupling <config.json> [...]  prediction vs interface sensor
    mobman filters-check [--out DIR]              filter responses vs oracles
    mobman report <dir>                           aggregate run summaries

Exit status: 0 success, 1 a run FAILED (or a check did not pass), 2 bad
configuration.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import bench, filters
from .config import ConfigError, ScenarioConfig, preset, PRESETS
from .sim import STATUS_FAILED, coupling_validation_run, run_scenario

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_CONFIG = 2


def _load_scenario(path):
    if path in PRESETS:
        return preset(path)
    return ScenarioConfig.from_json(path)


def cmd_run(args):
    cfg = _load_scenario(args.config)
    record = run_scenario(cfg)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    stem = os.path.join(out, f"{cfg.name}_seed{cfg.seed}")
    record.to_csv(stem + ".csv")
    metrics = {}
    channel = cfg.metrics.get("channel")
    if channel and record.ticks > 1:
        entry = bench.compute_metrics(record, channel, cfg.metrics.get("window"))
        metrics = entry.to_dict()
    record.save_summary(stem + "_summary.json", metrics=metrics)
    print(f"status: {record.status}")
    print(f"wrote {stem}.csv and {stem}_summary.json")
    if metrics:
        print(
            "metrics[%s]: RMSE=%s MAE=%s SSE=%s"
            % (
                channel,
                np.round(metrics["rmse"], 6).tolist(),
                np.round(metrics["mae"], 6).tolist(),
                np.round(metrics["sse"], 6).tolist(),
            )
        )
    return EXIT_OK if record.status != STATUS_FAILED else EXIT_RUN_FAILED


def cmd_ablate(args):
    spec = bench.AblationSpec.from_json(args.spec)
    if args.out:
        spec.output_dir = args.out
    done = []

    def progress(entry):
        done.append(entry)
        print(
            f"[{len(done)}] {entry['scenario']} {entry['controller']} "
            f"rep {entry['rep']}: {entry.get('rmse', float('nan')):.4f} RMSE "
            f"({entry['status']})",
            flush=True,
        )

    result = bench.run_ablation(spec, progress=progress)
    text = result.to_text()
    print()
    print(text)
    out = spec.output_dir or args.out or "."
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "ablation_table.csv"), "w") as fh:
        fh.write(result.to_csv())
    with open(os.path.join(out, "ablation_table.txt"), "w") as fh:
        fh.write(text)
    with open(os.path.join(out, "ablation_result.json"), "w") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out}/ablation_table.csv, .txt, and ablation_result.json")
    failed = any(e["status"] == STATUS_FAILED for e in result.per_run)
    return EXIT_RUN_FAILED if failed else EXIT_OK


def cmd_validate_coupling(args):
    cfg = _load_scenario(args.config)
    record, result = coupling_validation_run(cfg)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"{cfg.name}_pairs.csv")
    with open(path, "w") as fh:
        header = ["t"]
        header += [f"predicted{i + 1}" for i in range(6)]
        header += [f"measured{i + 1}" for i in range(6)]
        fh.write(",".join(header) + "\n")
        for t, p, m in zip(result["time"], result["predicted"], result["measured"]):
            fh.write(",".join(repr(v) for v in [t, *p, *m]) + "\n")
    summary = {
        "rmse": result["rmse"].tolist(),
        "mae": result["mae"].tolist(),
        "peak_predicted": result["peak_predicted"].tolist(),
        "rmse_over_peak": result["rmse_over_peak"].tolist(),
        "status": record.status,
    }
    with open(os.path.join(out, f"{cfg.name}_discrepancy.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"status: {record.status}")
    for i, axis in enumerate(["x", "y", "z", "mx", "my", "mz"]):
        print(
            f"  {axis}: RMSE {result['rmse'][i]:.4f}, MAE {result['mae'][i]:.4f}, "
            f"peak {result['peak_predicted'][i]:.4f}"
        )
    print(f"wrote {path}")
    return EXIT_OK if record.status != STATUS_FAILED else EXIT_RUN_FAILED


def cmd_filters_check(args):
    """Step and frequency responses of the stock filters vs dense oracles."""
    from scipy.integrate import solve_ivp
    from scipy.signal import tf2ss

    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    period = 0.008
    cases = {
        "feedforward_bandpass": filters.feedforward_bandpass(),
        "feedforward_bandpass_derivative": filters.feedforward_bandpass().times_s(),
        "feedback_lowpass_w6": filters.first_order_lowpass(6.0),
        "feedback_lowpass_w3": filters.first_order_lowpass(3.0),
    }
    ok = True
    rows = ["filter,max_abs_step_error,tolerance,pass"]
    for name, tf in cases.items():
        fs = filters.discretize(tf, period)
        n_steps = int(5.0 / period)
        y_disc = np.array([fs.step(1.0) for _ in range(n_steps)])
        A, B, C, D = tf2ss(np.array(tf.num[::-1]), np.array(tf.den[::-1]))

        def rhs(t, x):
            return (A @ x.reshape(-1, 1)).ravel() + B.ravel()

        # sample-aligned comparison at the trapezoid-consistent instants
        t_eval = (np.arange(n_steps) + 0.5) * period
        sol = solve_ivp(
            rhs,
            (0.0, t_eval[-1]),
            np.zeros(A.shape[0]),
            t_eval=t_eval,
            max_step=0.001,
            rtol=1e-10,
            atol=1e-12,
        )
        y_cont = (C @ sol.y).ravel() + float(np.asarray(D).reshape(())) * 1.0
        err = float(np.max(np.abs(y_disc - y_cont)))
        tol = 1e-3
        ok = ok and err < tol
        rows.append(f"{name},{err!r},{tol!r},{err < tol}")
        with open(os.path.join(out, f"step_{name}.csv"), "w") as fh:
            fh.write("t,discrete,continuous\n")
            for t, yd, yc in zip(t_eval, y_disc, y_cont):
                fh.write(f"{t!r},{yd!r},{yc!r}\n")
        # frequency response of the discrete filter vs the continuous target
        freqs = np.logspace(-1, 1.5, 60)
        fs2 = filters.discretize(tf, period)
        with open(os.path.join(out, f"freq_{name}.csv"), "w") as fh:
            fh.write("omega,mag_discrete,mag_continuous\n")
            for w in freqs:
                if fs2.order:
                    H = (
                        fs2.C
                        @ np.linalg.solve(
                            np.exp(1j * w * period) * np.eye(fs2.order) - fs2.A, fs2.B
                        )
                        + fs2.D
                    ).ravel()[0]
                else:
                    H = fs2.D
                fh.write(f"{w!r},{abs(H)!r},{abs(tf(1j * w))!r}\n")
    table = "\n".join(rows) + "\n"
    with open(os.path.join(out, "filters_check.csv"), "w") as fh:
        fh.write(table)
    print(table)
    return EXIT_OK if ok else EXIT_RUN_FAILED


def cmd_report(args):
    rows = bench.aggregate_summaries(args.directory)
    if not rows:
        print("no *_summary.json files found")
        return EXIT_CONFIG
    print(f"{'name':<24}{'controller':<12}{'seed':<6}{'status':<14}metrics")
    for row in rows:
        print(
            f"{row['name']:<24}{row['controller']:<12}{str(row['seed']):<6}"
            f"{row['status']:<14}{json.dumps(row['metrics'], sort_keys=True)}"
        )
    out = os.path.join(args.directory, "report.csv")
    with open(out, "w") as fh:
        fh.write("file,name,controller,seed,status,rmse,mae,sse\n")
        for row in rows:
            m = row["metrics"]
            fh.write(
                ",".join(
                    [
                        row["file"],
                        row["name"],
                        row["controller"],
                        str(row["seed"]),
                        row["status"],
                        repr(m.get("rmse", "")),
                        repr(m.get("mae", "")),
                        repr(m.get("sse", "")),
                    ]
                )
                + "\n"
            )
    print(f"wrote {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mobman",
        description="Simulation and motion/force control benchmark for a "
        "manipulator on a moving base.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario (JSON file or preset name)")
    p.add_argument("config", help=f"scenario JSON path or preset: {sorted(PRESETS)}")
    p.add_argument("--out", help="output directory (default: cwd)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run the controller-ablation grid")
    p.add_argument("spec", help="ablation spec JSON path")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser(
        "validate-coupling", help="joint-regulation coupling validation run"
    )
    p.add_argument("config", help="scenario JSON path or preset name")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_validate_coupling)

    p = sub.add_parser("filters-check", help="filter responses against oracles")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_filters_check)

    p = sub.add_parser("report", help="aggregate *_summary.json files in a directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
