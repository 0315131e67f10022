"""Command-line entry points: run the service, generate and replay synthetic
walks, and evaluate detection quality on corpora and trial logs.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import click

from gaitgate.core import DetectionParams
from gaitgate.evalkit import (
    bland_altman,
    evaluate_corpus,
    linear_fit,
    parameter_sweep,
    success_summary,
    threshold_search,
    write_table,
)
from gaitgate.service import GaitSpeedService
from gaitgate.session import SessionConfig
from gaitgate.simulate import (
    WalkProfile,
    generate_corpus,
    generate_walk,
    load_corpus,
    replay as replay_capture,
    write_capture,
)

logger = logging.getLogger(__name__)


def load_service_config(path: Path) -> dict:
    """Parse and validate a service configuration file.

    JSON object with keys: schemaVersion (1), tags ({label: epc}),
    portRoles ({port: role}), params (detection parameters using the wire
    keys), cooldownS, idleTimeoutS. All keys except schemaVersion optional.
    """
    raw = json.loads(path.read_text(encoding="utf-8"))
    if raw.get("schemaVersion") != 1:
        raise ValueError("config schemaVersion must be 1")
    cfg: dict = {"tags": raw.get("tags", {})}
    p = raw.get("params", {})
    cfg["params"] = DetectionParams(
        w1=p.get("w1", 14), w2=p.get("w2", 14),
        tau1=p.get("tau1", 1.0), tau2=p.get("tau2", 1.0),
        distance_m=p.get("distanceM", 4.0),
    )
    cfg["port_roles"] = {int(k): v for k, v in raw.get("portRoles", {}).items()}
    cfg["session"] = SessionConfig(
        cooldown_s=raw.get("cooldownS", 10.0),
        idle_timeout_s=raw.get("idleTimeoutS", 120.0),
    )
    return cfg


@click.group()
def main() -> None:
    """Dual-antenna RFID gait-speed monitoring toolkit."""
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True,
              path_type=Path), help="Service configuration file (JSON).")
@click.option("--trial-log", type=click.Path(path_type=Path),
              help="Append completed trials to this JSONL file.")
def serve(host: str, port: int, config_path: Path | None,
          trial_log: Path | None) -> None:
    """Run the ingestion gateway and measurement engine."""
    import uvicorn

    from gaitgate.gateway import create_app

    params = DetectionParams()
    port_roles = None
    session = SessionConfig()
    tags: dict = {}
    if config_path is not None:
        cfg = load_service_config(config_path)
        params, session, tags = cfg["params"], cfg["session"], cfg["tags"]
        port_roles = cfg["port_roles"] or None
    service = GaitSpeedService(params=params, session_config=session,
                               port_roles=port_roles,
                               trial_log_path=trial_log)
    for label, epc in tags.items():
        service.register_tag(label, epc)
    app = create_app(service)
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    finally:
        service.stop()


# ---------------------------------------------------------------------------
# simulator commands
# ---------------------------------------------------------------------------

def _parse_false_peak(_ctx, _param, values):
    peaks = []
    for v in values:
        try:
            t, dur, peak = (float(part) for part in v.split(","))
        except ValueError:
            raise click.BadParameter(
                f"expected TIME,DURATION,PEAK_DBM, got {v!r}")
        peaks.append((t, dur, peak))
    return tuple(peaks)


@main.command("gen-walk")
@click.option("--speed", default=1.0, show_default=True,
              help="Walking speed, m/s.")
@click.option("--lateral-offset", default=0.10, show_default=True,
              help="Closest-approach distance to each antenna, m.")
@click.option("--start-x", default=-2.0, show_default=True,
              help="Starting position relative to the entry antenna, m.")
@click.option("--sample-rate", default=30.0, show_default=True,
              help="Per-antenna read rate, Hz.")
@click.option("--noise-sigma", default=0.1, show_default=True,
              help="RSSI noise standard deviation, dBm.")
@click.option("--gain-offset", default=0.0, show_default=True,
              help="Constant per-tag RSSI gain offset, dBm.")
@click.option("--false-peak", multiple=True, callback=_parse_false_peak,
              metavar="T,DUR,PEAK",
              help="Inject an entry-antenna bump (repeatable).")
@click.option("--seed", default=0, show_default=True)
@click.option("--distance", default=4.0, show_default=True,
              help="Antenna separation, m.")
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Capture file to write.")
def gen_walk(speed, lateral_offset, start_x, sample_rate, noise_sigma,
             gain_offset, false_peak, seed, distance, out: Path) -> None:
    """Generate one synthetic walk and write it as a capture file."""
    profile = WalkProfile(
        speed_mps=speed, lateral_offset_m=lateral_offset, start_x_m=start_x,
        sample_rate_hz=sample_rate, noise_sigma_dbm=noise_sigma,
        gain_offset_dbm=gain_offset, false_peaks=false_peak, seed=seed)
    params = DetectionParams(distance_m=distance)
    walk = generate_walk(profile, params)
    write_capture(out, walk, profile, params)
    click.echo(f"wrote {out}: {len(walk.trace1)} entry reads, "
               f"{len(walk.trace2)} exit reads, "
               f"true speed {walk.truth.true_speed_mps} m/s")
    if walk.low_sample_warning:
        click.echo("warning: entry trace shorter than the detection window",
                   err=True)


@main.command("gen-corpus")
@click.option("-n", "count", default=26, show_default=True,
              help="Number of walks.")
@click.option("--speed-min", default=0.6, show_default=True)
@click.option("--speed-max", default=1.5, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--noise-sigma", type=float, default=None,
              help="Override per-walk RSSI noise, dBm.")
@click.option("--gain-spread", default=0.4, show_default=True,
              help="Half-width of the per-walk gain offset range, dBm.")
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
def gen_corpus(count, speed_min, speed_max, seed, noise_sigma, gain_spread,
               out_dir: Path) -> None:
    """Generate a labeled corpus of walks plus a manifest."""
    manifest = generate_corpus(
        count, (speed_min, speed_max), seed=seed, out_dir=out_dir,
        noise_sigma_dbm=noise_sigma, gain_spread_dbm=gain_spread)
    click.echo(f"wrote {count} walks; manifest at {manifest}")


@main.command()
@click.argument("capture", type=click.Path(exists=True, path_type=Path))
@click.option("--target", envvar="GAITGATE_TARGET",
              default="http://127.0.0.1:8000", show_default=True,
              help="Service base URL (env GAITGATE_TARGET).")
@click.option("--time-scale", default=1.0, show_default=True,
              help="Sleep multiplier between batches; 0 sends back-to-back.")
@click.option("--batch-window", default=0.1, show_default=True,
              help="Batch grouping window on original timestamps, s.")
def replay(capture: Path, target: str, time_scale: float,
           batch_window: float) -> None:
    """POST a capture file's reads to a running service."""
    sent = replay_capture(capture, target, time_scale=time_scale,
                          batch_window_s=batch_window)
    click.echo(f"sent {sent} batches to {target}")


# ---------------------------------------------------------------------------
# evaluation commands
# ---------------------------------------------------------------------------

def _echo_table(columns, rows):
    widths = [max(len(c), *(len(r[i]) for r in rows)) if rows else len(c)
              for i, c in enumerate(columns)]
    click.echo("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
    for row in rows:
        click.echo("  ".join(v.ljust(w) for v, w in zip(row, widths)))


@main.command()
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True,
              path_type=Path), required=True)
@click.option("--w", "w_values", multiple=True, type=int,
              help="Window sizes to evaluate (repeatable; default 5..20).")
@click.option("--tau", "tau_values", multiple=True, type=float,
              help="Drop thresholds to evaluate (repeatable; default 1,3).")
@click.option("--out", type=click.Path(path_type=Path),
              help="Also write the grid as a CSV data file.")
def sweep(corpus_dir: Path, w_values, tau_values, out: Path | None) -> None:
    """Evaluate the detector over a (window, threshold) grid."""
    corpus = load_corpus(corpus_dir)
    ws = list(w_values) or list(range(5, 21))
    taus = list(tau_values) or [1.0, 3.0]
    cells = parameter_sweep(corpus, ws, taus)
    rows = [[str(c.w), f"{c.tau:g}", f"{c.mean_error_pct:.4f}",
             f"{c.success_fraction:.3f}"] for c in cells]
    _echo_table(["w", "tau", "meanErrPct", "successFrac"], rows)
    if out is not None:
        write_table(out, ["w", "tau", "meanErrPct", "successFrac"],
                    [[c.w, c.tau, c.mean_error_pct, c.success_fraction]
                     for c in cells])
        click.echo(f"wrote {out}")


@main.command("baseline-search")
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True,
              path_type=Path), required=True)
@click.option("--low", default=-70.0, show_default=True)
@click.option("--high", default=-40.0, show_default=True)
@click.option("--step", default=1.0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path),
              help="Also write the rows as a CSV data file.")
def baseline_search(corpus_dir: Path, low, high, step,
                    out: Path | None) -> None:
    """Exhaustively evaluate fixed-threshold timing, ranked by MAE."""
    corpus = load_corpus(corpus_dir)
    rows = threshold_search(corpus, range_dbm=(low, high), step_dbm=step)
    text = [[f"{r.threshold_dbm:g}",
             "n/a" if math.isnan(r.mae_mps) else f"{r.mae_mps:.4f}",
             "n/a" if math.isnan(r.mean_error_pct)
             else f"{r.mean_error_pct:.4f}",
             str(r.success_count), f"{r.success_fraction:.3f}"]
            for r in rows]
    _echo_table(["thresholdDbm", "maeMps", "meanErrPct", "successes",
                 "successFrac"], text)
    if out is not None:
        write_table(out, ["thresholdDbm", "maeMps", "meanErrPct",
                          "successes", "successFrac"],
                    [[r.threshold_dbm, r.mae_mps, r.mean_error_pct,
                      r.success_count, r.success_fraction] for r in rows])
        click.echo(f"wrote {out}")


@main.command()
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True,
              path_type=Path), required=True)
@click.option("--w", default=14, show_default=True)
@click.option("--tau", default=1.0, show_default=True)
@click.option("--points-out", type=click.Path(path_type=Path),
              help="Write per-walk (mean, diff) points as a CSV data file.")
def agree(corpus_dir: Path, w: int, tau: float,
          points_out: Path | None) -> None:
    """Agreement between measured and true speeds over a corpus."""
    corpus = load_corpus(corpus_dir)
    params = DetectionParams(w1=w, w2=w, tau1=tau, tau2=tau)
    pairs, attempted = evaluate_corpus(corpus, params)
    if len(pairs) < 2:
        raise click.ClickException(
            f"only {len(pairs)}/{attempted} walks measurable")
    report = bland_altman(pairs)
    click.echo(f"n={report.n}/{attempted}  mae={report.mae_mps:.4f} m/s  "
               f"meanErr={report.mean_error_pct:.3f}%")
    click.echo(f"bias={report.bias_mps:+.4f} m/s  "
               f"loa=[{report.loa_low_mps:+.4f}, {report.loa_high_mps:+.4f}]")
    if points_out is not None:
        write_table(points_out, ["meanMps", "diffMps"], report.points)
        click.echo(f"wrote {points_out}")


@main.command()
@click.option("--trial-log", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--excluded", "sidecar", type=click.Path(path_type=Path),
              help='Operator sidecar JSON {"excluded": N}.')
def summary(trial_log: Path, sidecar: Path | None) -> None:
    """Tabulate trial outcomes from a trial log."""
    s = success_summary(trial_log, sidecar)
    pct = s.percentages
    _echo_table(["outcome", "count", "pct"], [
        ["success", str(s.success), f"{pct['success']:.1f}"],
        ["erroneous", str(s.erroneous), f"{pct['erroneous']:.1f}"],
        ["systemFailure", str(s.system_failure),
         f"{pct['systemFailure']:.1f}"],
    ])
    click.echo(f"total {s.n} trials, {s.excluded} operator-excluded")


@main.command()
@click.argument("points_file", type=click.Path(exists=True, path_type=Path))
@click.option("--band-out", type=click.Path(path_type=Path),
              help="Write the fitted line and 95% confidence band as CSV.")
def fit(points_file: Path, band_out: Path | None) -> None:
    """Least-squares line through a CSV file of x,y points (header line)."""
    lines = points_file.read_text(encoding="utf-8").splitlines()
    points = []
    for line in lines[1:]:
        if not line.strip():
            continue
        x, y = (float(v) for v in line.split(",")[:2])
        points.append((x, y))
    result = linear_fit(points)
    lo, hi = result.slope_ci()
    click.echo(f"slope={result.slope:.4f} [{lo:.4f}, {hi:.4f}]  "
               f"intercept={result.intercept:.4f}  n={result.n}")
    if band_out is not None:
        xs = sorted(p[0] for p in points)
        low, high = result.confidence_band(xs)
        write_table(band_out, ["x", "yFit", "ciLow", "ciHigh"],
                    [[x, float(result.predict(x)), float(lo_), float(hi_)]
                     for x, lo_, hi_ in zip(xs, low, high)])
        click.echo(f"wrote {band_out}")


if __name__ == "__main__":
    main()
