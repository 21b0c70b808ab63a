"""Metrics and the four-controller ablation harness.

``compute_metrics`` turns an error channel of a run record into RMSE / MAE /
SSE (signed mean over the terminal window); ``run_ablation`` executes the
scenario x controller x repetition grid, averages per cell, and renders the
comparison table with percentage improvements over the plain impedance
baseline (C4) plus the low-to-high dynamic degradation summary.
"""

import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, ScenarioConfig, preset
from .sim import STATUS_OK, run_scenario

SSE_WINDOW_SECONDS = 10.0

# error channels derivable from a run record: name -> (extractor, axis labels)


def _force_error_y(record):
    d = record.data
    return (d["fe"][:, 1] - d["fed"][:, 1])[:, None], ["y"]


def _force_error(record):
    d = record.data
    return d["fe"] - d["fed"], ["x", "y", "z", "mx", "my", "mz"]


def _position_error(record):
    d = record.data
    return d["x"] - d["xd"], ["x", "y", "z", "roll", "pitch", "yaw"]


def _coupling_residual(record):
    d = record.data
    return d["mu_meas"] - d["mu_c"], ["x", "y", "z", "mx", "my", "mz"]


CHANNELS = {
    "force_y": _force_error_y,
    "force": _force_error,
    "position_error": _position_error,
    "coupling_residual": _coupling_residual,
}


class MetricsError(ValueError):
    pass


@dataclass
class MetricsEntry:
    """Per-axis tracking metrics over a window of one run."""

    channel: str
    axes: list
    rmse: np.ndarray
    mae: np.ndarray
    sse: np.ndarray
    window: tuple

    @property
    def rmse_total(self):
        return float(np.sqrt(np.mean(self.rmse**2)))

    def scalar(self, name):
        """Single-number summary: the first axis of single-axis channels,
        otherwise the aggregate."""
        arr = getattr(self, name)
        return float(arr[0]) if arr.shape[0] == 1 else float(np.mean(arr))

    def to_dict(self):
        return {
            "channel": self.channel,
            "axes": list(self.axes),
            "rmse": self.rmse.tolist(),
            "mae": self.mae.tolist(),
            "sse": self.sse.tolist(),
            "window": list(self.window),
        }


def compute_metrics(record, channel, window=None, sse_window=SSE_WINDOW_SECONDS):
    """RMSE / MAE / SSE of an error channel over [window[0], window[1]].

    SSE is the signed mean over the final ``sse_window`` seconds of the
    window (or the whole window when shorter).  Rejects unknown channels and
    empty windows.
    """
    if channel not in CHANNELS:
        raise MetricsError(f"unknown channel {channel!r}; have {sorted(CHANNELS)}")
    err, axes = CHANNELS[channel](record)
    t = record.data["t"]
    if window is None:
        lo, hi = t[0], t[-1]
    else:
        lo = t[0] if window[0] is None else float(window[0])
        hi = t[-1] if (len(window) < 2 or window[1] is None) else float(window[1])
    mask = (t >= lo) & (t <= hi)
    if not np.any(mask):
        raise MetricsError(f"empty metrics window [{lo}, {hi}]")
    sel = err[mask]
    rmse = np.sqrt(np.mean(sel**2, axis=0))
    mae = np.mean(np.abs(sel), axis=0)
    t_sel = t[mask]
    sse_lo = max(lo, hi - sse_window)
    sse_mask = t_sel >= sse_lo
    sse = np.mean(sel[sse_mask], axis=0)
    return MetricsEntry(channel, axes, rmse, mae, sse, (lo, hi))


# ---------------------------------------------------------------------------
# ablation harness
# ---------------------------------------------------------------------------

CONTROLLER_ORDER = ("C4", "C3", "C2", "C1")


@dataclass
class AblationSpec:
    """Grid description: scenarios x controllers x seeded repetitions."""

    scenarios: tuple = ("low-dynamic-wall", "high-dynamic-wall")
    controllers: tuple = CONTROLLER_ORDER
    repetitions: int = 10
    seed_base: int = 0
    output_dir: str = None
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions", "must be >= 1")
        for c in self.controllers:
            if c not in CONTROLLER_ORDER:
                raise ConfigError("controllers", f"unknown controller {c!r}")

    @classmethod
    def from_dict(cls, data):
        known = {
            "scenarios",
            "controllers",
            "repetitions",
            "seed_base",
            "output_dir",
            "overrides",
        }
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        return cls(
            scenarios=tuple(data.get("scenarios", ("low-dynamic-wall", "high-dynamic-wall"))),
            controllers=tuple(data.get("controllers", CONTROLLER_ORDER)),
            repetitions=int(data.get("repetitions", 10)),
            seed_base=int(data.get("seed_base", 0)),
            output_dir=data.get("output_dir"),
            overrides=dict(data.get("overrides", {})),
        )

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}")

    def scenario_config(self, scenario, controller, rep):
        if isinstance(scenario, ScenarioConfig):
            cfg = scenario.replace()
        else:
            cfg = preset(scenario)
        for key, val in self.overrides.items():
            setattr(cfg, key, val) if hasattr(cfg, key) else None
        cfg = cfg.with_controller(controller)
        cfg.seed = self.seed_base + rep
        return cfg


@dataclass
class AblationCell:
    scenario: str
    controller: str
    rmse: float
    mae: float
    sse: float
    runs: int
    failed: int

    def improvements(self, baseline):
        def pct(ours, base):
            return 100.0 * (base - ours) / base if base != 0.0 else 0.0

        return {
            "rmse": pct(self.rmse, baseline.rmse),
            "mae": pct(self.mae, baseline.mae),
            "sse": pct(abs(self.sse), abs(baseline.sse)),
        }


@dataclass
class AblationResult:
    spec: AblationSpec
    cells: dict  # (scenario, controller) -> AblationCell
    per_run: list  # dicts, sorted by (scenario, controller, rep)

    def baseline(self, scenario):
        return self.cells[(scenario, "C4")]

    def table_rows(self):
        """Rows C4..C1 with RMSE/MAE/SSE per scenario and % improvement."""
        rows = []
        scenarios = list(self.spec.scenarios)
        for controller in self.spec.controllers:
            row = {"controller": controller}
            for sc in scenarios:
                name = sc if isinstance(sc, str) else sc.name
                cell = self.cells[(name, controller)]
                base = self.cells.get((name, "C4"), cell)
                imp = cell.improvements(base)
                row[name] = {
                    "rmse": cell.rmse,
                    "mae": cell.mae,
                    "sse": cell.sse,
                    "improvement": imp,
                    "failed": cell.failed,
                    "runs": cell.runs,
                }
            rows.append(row)
        return rows

    def degradation(self):
        """Percent RMSE growth from the first scenario to the second."""
        scenarios = [sc if isinstance(sc, str) else sc.name for sc in self.spec.scenarios]
        if len(scenarios) < 2:
            return {}
        lo, hi = scenarios[0], scenarios[1]
        out = {}
        for controller in self.spec.controllers:
            a = self.cells[(lo, controller)].rmse
            b = self.cells[(hi, controller)].rmse
            out[controller] = 100.0 * (b - a) / a if a != 0.0 else 0.0
        return out

    # -- rendering -----------------------------------------------------------

    def to_csv(self):
        buf = io.StringIO()
        scenarios = [sc if isinstance(sc, str) else sc.name for sc in self.spec.scenarios]
        header = ["controller"]
        for sc in scenarios:
            header += [
                f"{sc}:rmse",
                f"{sc}:rmse_improvement_pct",
                f"{sc}:mae",
                f"{sc}:mae_improvement_pct",
                f"{sc}:sse",
                f"{sc}:sse_improvement_pct",
                f"{sc}:failed_runs",
            ]
        buf.write(",".join(header) + "\n")
        for row in self.table_rows():
            cells = [row["controller"]]
            for sc in scenarios:
                c = row[sc]
                cells += [
                    repr(c["rmse"]),
                    repr(c["improvement"]["rmse"]),
                    repr(c["mae"]),
                    repr(c["improvement"]["mae"]),
                    repr(c["sse"]),
                    repr(c["improvement"]["sse"]),
                    str(c["failed"]),
                ]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def to_text(self):
        scenarios = [sc if isinstance(sc, str) else sc.name for sc in self.spec.scenarios]
        lines = []
        width = 26
        head = "controller".ljust(11) + "".join(
            f"{sc:^{3 * width // 2}}" for sc in scenarios
        )
        lines.append(head)
        sub = " " * 11 + "".join(
            f"{'RMSE':^{width // 2}}{'MAE':^{width // 2}}{'SSE':^{width // 2}}"
            for _ in scenarios
        )
        lines.append(sub)
        for row in self.table_rows():
            out = row["controller"].ljust(11)
            for sc in scenarios:
                c = row[sc]
                imp = c["improvement"]
                if row["controller"] == "C4":
                    cells = [
                        f"{c['rmse']:.3f}",
                        f"{c['mae']:.3f}",
                        f"{c['sse']:.3f}",
                    ]
                else:
                    cells = [
                        f"{c['rmse']:.3f} ({imp['rmse']:.1f}%)",
                        f"{c['mae']:.3f} ({imp['mae']:.1f}%)",
                        f"{c['sse']:.3f} ({imp['sse']:.1f}%)",
                    ]
                if c["failed"]:
                    cells[0] += f" [{c['failed']} FAILED]"
                out += "".join(f"{x:^{width // 2}}" for x in cells)
            lines.append(out)
        deg = self.degradation()
        if deg:
            lines.append("")
            lines.append("RMSE degradation from %s to %s:" % tuple(scenarios[:2]))
            for controller, pct in deg.items():
                lines.append(f"  {controller}: {pct:+.1f}%")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {
            "rows": self.table_rows(),
            "degradation": self.degradation(),
            "repetitions": self.spec.repetitions,
            "seed_base": self.spec.seed_base,
            "per_run": self.per_run,
        }


def run_ablation(spec, progress=None):
    """Execute the grid and aggregate; FAILED runs are annotated, not dropped."""
    jobs = []
    for scenario in spec.scenarios:
        for controller in spec.controllers:
            for rep in range(spec.repetitions):
                jobs.append((scenario, controller, rep))
    results = []
    for scenario, controller, rep in jobs:
        cfg = spec.scenario_config(scenario, controller, rep)
        record = run_scenario(cfg)
        name = scenario if isinstance(scenario, str) else scenario.name
        entry = {
            "scenario": name,
            "controller": controller,
            "rep": rep,
            "seed": cfg.seed,
            "status": record.status,
        }
        if record.status == STATUS_OK or record.status == "NONCONFORMANT":
            m = compute_metrics(
                record, cfg.metrics["channel"], cfg.metrics.get("window")
            )
            entry["rmse"] = m.scalar("rmse")
            entry["mae"] = m.scalar("mae")
            entry["sse"] = m.scalar("sse")
        results.append(entry)
        if spec.output_dir:
            os.makedirs(spec.output_dir, exist_ok=True)
            stem = f"{name}_{controller}_rep{rep}"
            record.to_csv(os.path.join(spec.output_dir, stem + ".csv"))
            record.save_summary(
                os.path.join(spec.output_dir, stem + "_summary.json"),
                metrics={k: entry[k] for k in ("rmse", "mae", "sse") if k in entry},
            )
        if progress is not None:
            progress(entry)
    results.sort(key=lambda e: (e["scenario"], e["controller"], e["rep"]))
    cells = {}
    for scenario in spec.scenarios:
        name = scenario if isinstance(scenario, str) else scenario.name
        for controller in spec.controllers:
            runs = [
                e
                for e in results
                if e["scenario"] == name and e["controller"] == controller
            ]
            good = [e for e in runs if "rmse" in e]
            failed = len(runs) - len(good)
            if good:
                rmse = float(np.mean([e["rmse"] for e in good]))
                mae = float(np.mean([e["mae"] for e in good]))
                sse = float(np.mean([e["sse"] for e in good]))
            else:
                rmse = mae = sse = float("nan")
            cells[(name, controller)] = AblationCell(
                name, controller, rmse, mae, sse, len(runs), failed
            )
    return AblationResult(spec, cells, results)


def aggregate_summaries(directory):
    """Collect `*_summary.json` files into one table (the `report` command)."""
    rows = []
    for fname in sorted(os.listdir(directory)):
        if not fname.endswith("_summary.json"):
            continue
        with open(os.path.join(directory, fname)) as fh:
            doc = json.load(fh)
        rows.append(
            {
                "file": fname,
                "name": doc.get("config", {}).get("name", ""),
                "controller": doc.get("config", {})
                .get("controller", {})
                .get("kind", ""),
                "seed": doc.get("seed"),
                "status": doc.get("status"),
                "metrics": doc.get("metrics", {}),
            }
        )
    return rows
