"""Command-line front end: ``paprlab {simulate,analyze,allocate,compare,replay}``.

Every command writes a CSV and a ``<out>.manifest.json`` sidecar holding the
resolved configuration and parameters; ``paprlab replay`` regenerates the
CSV from the sidecar alone.

Exit codes: 0 success, 1 configuration/usage error, 2 runtime error.  Errors
are reported on stderr as a single ``paprlab: error kind=... key=... msg=...``
line.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, allocate, analytic, papr
from .config import ConfigError, derive_layout, load_spec, spec_from_dict, spec_to_dict
from .waveform import FilterSpec, WaveformOptions

PROBE_LEVELS = (1e-1, 1e-2, 1e-3)


class UsageError(Exception):
    pass


def _fmt_db(x: float) -> str:
    return f"{x:.2f}"


def _fmt_prob(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.5e}"


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    lines = [",".join(header)] + [",".join(r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    if step <= 0:
        raise UsageError("--step-db must be positive")
    if hi < lo:
        raise UsageError("--gamma-max-db must not be below --gamma-min-db")
    if 10.0 ** (lo / 10.0) < analytic.VALIDITY_FLOOR:
        raise UsageError(f"--gamma-min-db must be >= {10 * math.log10(analytic.VALIDITY_FLOOR):.3f} dB (gamma >= 1/2)")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return np.round(lo + step * np.arange(n + 1), 10)


def _waveform_options(doc: dict) -> WaveformOptions:
    raw = doc.get("waveform") or {}
    if not isinstance(raw, dict):
        raise ConfigError("'waveform' must be an object", key="waveform")
    filt = raw.get("filter")
    fspec = None
    if filt:
        if filt is True:
            filt = {}
        try:
            fspec = FilterSpec(**filt)
        except TypeError as exc:
            raise ConfigError(f"bad filter options: {exc}", key="waveform.filter") from exc
    rolloff = raw.get("window_rolloff", 0)
    if isinstance(rolloff, bool) or not isinstance(rolloff, int) or rolloff < 0:
        raise ConfigError("window_rolloff must be a non-negative integer", key="waveform.window_rolloff")
    return WaveformOptions(fspec, rolloff)


def _resolved_config(doc: dict) -> dict:
    """Normalized config document stored in manifests."""
    spec = spec_from_dict(doc)
    out = spec_to_dict(spec)
    if doc.get("waveform"):
        out["waveform"] = doc["waveform"]
    return out


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", key="--config") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return _resolved_config(doc)


def _layout(config: dict):
    spec = spec_from_dict(config)
    return derive_layout(spec), _waveform_options(config)


def _write_manifest(out: Path, command: str, config: dict, params: dict, summary: dict | None = None) -> None:
    manifest = {
        "tool": "paprlab",
        "version": __version__,
        "command": command,
        "parameters": params,
        "seed": params.get("seed", config.get("seed")),
        "config": config,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if summary is not None:
        manifest["summary"] = summary
    Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


# -- commands -------------------------------------------------------------

def run_simulate(config: dict, params: dict, out: Path) -> dict:
    trials = params["trials"]
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    layout, options = _layout(config)
    grid = _grid(params["gamma_min_db"], params["gamma_max_db"], params["step_db"])
    gam = papr.run_monte_carlo(layout, trials, params["seed"], options=options)
    curve = papr.empirical_ccdf(gam, grid)
    rows = [[_fmt_db(g), _fmt_prob(p)] for g, p in zip(curve.gamma_db_grid, curve.prob)]
    _write_csv(out, ["gamma_db", "ccdf_empirical"], rows)
    return {"papr_db_at": {f"{p:g}": papr.papr_at_probability(gam, p) for p in PROBE_LEVELS if p * trials >= 1}}


def run_analyze(config: dict, params: dict, out: Path) -> dict:
    layout, _ = _layout(config)
    grid = _grid(params["gamma_min_db"], params["gamma_max_db"], params["step_db"])
    curves = analytic.analytic_curves(layout, grid)
    cols = list(analytic.ANALYTIC_COLUMNS)
    rows = [[_fmt_db(g)] + [_fmt_prob(curves[c][k]) for c in cols] for k, g in enumerate(grid)]
    _write_csv(out, ["gamma_db"] + cols, rows)
    return {
        "lambda": analytic.lambda_factor(layout).lambda_cap,
        "n_total": layout.total_subcarriers,
    }


def run_compare(config: dict, params: dict, out: Path) -> dict:
    layout, options = _layout(config)
    grid = _grid(params["gamma_min_db"], params["gamma_max_db"], params["step_db"])
    trials = params["trials"]
    curves = analytic.analytic_curves(layout, grid)
    cols = list(analytic.ANALYTIC_COLUMNS)
    summary: dict = {"lambda": analytic.lambda_factor(layout).lambda_cap, "trials": trials, "gaps_db": {}}
    if trials > 0:
        gam = papr.run_monte_carlo(layout, trials, params["seed"], options=options)
        empirical = papr.empirical_ccdf(gam, grid).prob
    else:
        print("paprlab: warning: trials=0, writing analytical curves only", file=sys.stderr)
        gam, empirical = None, [None] * len(grid)
    rows = [
        [_fmt_db(g), _fmt_prob(empirical[k])] + [_fmt_prob(curves[c][k]) for c in cols]
        for k, g in enumerate(grid)
    ]
    _write_csv(out, ["gamma_db", "ccdf_empirical"] + cols, rows)
    if gam is not None:
        for p in PROBE_LEVELS:
            if p * trials < 10:
                continue
            emp_db = papr.papr_at_probability(gam, p)
            summary["gaps_db"][f"{p:g}"] = {
                c: abs(analytic.papr_at_ccdf_db(c, layout, p) - emp_db) for c in cols
            } | {"empirical_db": emp_db}
    return summary


def run_allocate(config: dict, params: dict, out: Path) -> dict:
    layout, _ = _layout(config)
    step = params["step"]
    m = layout.num_subbands
    summary: dict = {"M": m, "step": step}
    grid = allocate.grid_search_oracle(layout, step)
    summary["grid_eta"] = grid.eta_star.tolist()
    summary["grid_lambda"] = grid.lambda_at_opt
    if m == 2:
        try:
            closed = allocate.solve_closed_form_two(layout)
            kkt = allocate.solve_kkt(allocate.build_qp(layout))
        except (ZeroDivisionError, np.linalg.LinAlgError) as exc:
            summary["note"] = f"degenerate layout (alpha_1 == alpha_2): {exc}; grid used"
        else:
            summary.update(
                closed_form_eta=closed.eta_star.tolist(),
                closed_form_boundary=closed.boundary,
                kkt_eta=kkt.eta_star.tolist(),
                kkt_nu=kkt.diagnostics["nu"],
                delta_closed_kkt=float(np.max(np.abs(closed.eta_star - kkt.eta_star))),
                delta_closed_grid=float(np.max(np.abs(closed.eta_star - grid.eta_star))),
            )
        eta1 = _grid_inside(step)
        rows = allocate.sweep_mean_envelope(
            layout, eta1, mc_trials=params["trials"] if params["with_mc"] else 0, seed=params["seed"]
        )
        _write_csv(
            out,
            ["eta1", "lambda", "mean_envelope", "mc_mean_papr_db"],
            [[f"{r.eta1:.6f}", _fmt(r.lambda_cap), _fmt(r.mean_envelope), _fmt(r.mc_mean_papr_db)] for r in rows],
        )
    else:
        summary["note"] = "KKT singular, grid used"
        _write_csv(out, ["subband", "eta_star"], [[str(i), _fmt(e)] for i, e in enumerate(grid.eta_star)])
    return summary


def _grid_inside(step: float) -> np.ndarray:
    """Sweep points k*step strictly inside (0, 1), at most ~100 of them."""
    stride = max(1, int(round(0.01 / step)))
    n = int(round(1.0 / step))
    return np.array([k / n for k in range(stride, n, stride)])


COMMANDS = {
    "simulate": run_simulate,
    "analyze": run_analyze,
    "compare": run_compare,
    "allocate": run_allocate,
}


def _print_summary(command: str, summary: dict) -> None:
    print(f"# {command} summary")
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paprlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"paprlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials_default=None, with_grid=True):
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        if trials_default is not None:
            p.add_argument("--trials", type=int, default=trials_default)
            p.add_argument("--seed", type=int, default=None, help="defaults to the config seed")
        if with_grid:
            p.add_argument("--gamma-min-db", type=float, default=4.0)
            p.add_argument("--gamma-max-db", type=float, default=13.0)
            p.add_argument("--step-db", type=float, default=0.1)

    common(sub.add_parser("simulate", help="Monte Carlo empirical CCDF"), trials_default=10_000)
    common(sub.add_parser("analyze", help="analytical CCDF curves"))
    common(sub.add_parser("compare", help="empirical and analytical curves on one grid"), trials_default=10_000)
    p = sub.add_parser("allocate", help="power allocation and mean-envelope sweep")
    common(p, trials_default=5_000, with_grid=False)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--with-mc", action="store_true")
    p = sub.add_parser("replay", help="regenerate an output from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    return parser


def _error(kind: str, msg: str, key: str | None = None) -> None:
    parts = [f"kind={kind}"]
    if key:
        parts.append(f"key={key}")
    parts.append("msg=" + json.dumps(msg, ensure_ascii=True))
    print("paprlab: error " + " ".join(parts), file=sys.stderr)


def execute(command: str, config: dict, params: dict, out: Path) -> dict:
    summary = COMMANDS[command](config, params, out)
    _write_manifest(out, command, config, params, summary)
    return summary


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = Path(args.out)
        if args.command == "replay":
            try:
                manifest = json.loads(Path(args.manifest).read_text())
                command, config, params = manifest["command"], manifest["config"], manifest["parameters"]
            except (OSError, json.JSONDecodeError, KeyError) as exc:
                raise ConfigError(f"unreadable manifest: {exc}", key="--manifest") from exc
            if command not in COMMANDS:
                raise ConfigError(f"unknown command {command!r} in manifest", key="command")
        else:
            command = args.command
            config = _load_config(args.config)
            params = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out")}
            if "seed" in params and params["seed"] is None:
                params["seed"] = config["seed"]
        summary = execute(command, config, params, out)
    except (ConfigError, UsageError) as exc:
        _error("config" if isinstance(exc, ConfigError) else "usage", str(exc), getattr(exc, "key", None))
        return 1
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        _error("runtime", f"{type(exc).__name__}: {exc}")
        return 2
    _print_summary(command, summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
