"""Command-line pipeline: ingest, train, fit-fading, predict, simulate, evaluate, gen-synth.

Every command writes its products plus a ``manifest.json`` into
``<out>/<command>/<name>/``. The manifest snapshots the resolved parameters,
input file digests, tool version and a timestamp; apart from that timestamp,
rerunning a command with the same manifest reproduces every product byte for
byte, because all randomness flows from the seed/stream-id parameters.

Options may also come from a ``key=value`` config file (``--config``);
explicit flags win over the file, the file wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, baselines, fading, linksim, metrics, pathloss, synth, traces
from .errors import FileFormatError, FitError, ValidationError
from .propagation import LinkBudget, PropagationEngine
from .randvar import RngStream

PROG = "proptwin"


class CliError(Exception):
    """Usage-level failure raised by command implementations."""


def _error_code(exc: Exception) -> str:
    if isinstance(exc, FileFormatError):
        return "E_PARSE"
    if isinstance(exc, FitError):
        return "E_FIT"
    if isinstance(exc, (ValidationError, ValueError)):
        return "E_VALIDATE"
    if isinstance(exc, CliError):
        return "E_USAGE"
    if isinstance(exc, OSError):
        return "E_IO"
    return "E_INTERNAL"


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise FileFormatError("expected key=value", path=path, line=lineno)
            key, _, value = text.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args: argparse.Namespace, spec: dict) -> dict:
    """Merge option sources: explicit flag > config file > built-in default."""
    config = _load_config_file(args.config) if args.config else {}
    resolved = {}
    for dest, (convert, default) in spec.items():
        explicit = getattr(args, dest)
        if explicit is not None:
            resolved[dest] = explicit
        elif dest in config:
            try:
                resolved[dest] = convert(config[dest])
            except ValueError:
                raise CliError(f"config value for {dest!r} is not a valid {convert.__name__}")
        else:
            resolved[dest] = default
    unknown = set(config) - set(spec)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return resolved


def _out_dir(args: argparse.Namespace, command: str) -> Path:
    out = Path(args.out if args.out is not None else "out") / command / (args.name or "run")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out_dir: Path, command: str, params: dict, inputs: list):
    manifest = {
        "tool": PROG,
        "version": __version__,
        "command": command,
        "parameters": params,
        "input_digests": {str(p): _sha256(p) for p in inputs},
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_report(out_dir: Path, report: dict):
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_vec3(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise CliError(f"expected x,y,z position, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise CliError(f"position components must be numbers: {text!r}") from None


def _parse_model_spec(spec: str):
    """A model file path, or 'friis:<freq_mhz>', or 'logdist:<d0>,<ref_loss>,<n>'."""
    if spec.startswith("friis:"):
        try:
            freq = float(spec.split(":", 1)[1])
        except ValueError:
            raise CliError(f"bad friis model spec {spec!r}, expected friis:<freq_mhz>") from None
        return ("friis", freq)
    if spec.startswith("logdist:"):
        parts = spec.split(":", 1)[1].split(",")
        if len(parts) != 3:
            raise CliError(f"bad logdist model spec {spec!r}, expected logdist:<d0>,<ref_loss>,<n>")
        try:
            d0, ref_loss, exponent = (float(p) for p in parts)
        except ValueError:
            raise CliError(f"logdist parameters must be numbers: {spec!r}") from None
        return ("log-distance", baselines.LogDistanceParams(d0, ref_loss, exponent))
    return ("mlpl", pathloss.load_model(spec))


def _make_engine(model_spec, fading_pair=None) -> PropagationEngine:
    kind, payload = model_spec
    if kind == "friis":
        return PropagationEngine.friis(payload, fading=fading_pair)
    if kind == "log-distance":
        return PropagationEngine.log_distance(payload, fading=fading_pair)
    return PropagationEngine.mlpl(payload, fading=fading_pair)


def _parse_fading_spec(spec: str) -> fading.FadingFit | None:
    """'none', 'normal:<mean>,<std>', 'rayleigh:<loc>,<scale>', 'rician:<b>,<loc>,<scale>'."""
    if spec == "none":
        return None
    family, _, rest = spec.partition(":")
    if family not in fading.FAMILIES or not rest:
        raise CliError(
            f"bad fading spec {spec!r}; expected none, normal:<mean>,<std>, "
            f"rayleigh:<loc>,<scale>, or rician:<b>,<loc>,<scale>"
        )
    try:
        params = tuple(float(p) for p in rest.split(","))
    except ValueError:
        raise CliError(f"fading parameters must be numbers: {spec!r}") from None
    return fading.FadingFit(family, params)


def _parse_distances(distances: str | None, grid: str | None) -> list:
    if (distances is None) == (grid is None):
        raise CliError("provide exactly one of --distances or --grid")
    if distances is not None:
        try:
            values = [float(p) for p in distances.split(",") if p.strip()]
        except ValueError:
            raise CliError(f"distances must be numbers: {distances!r}") from None
        if not values:
            raise CliError("no distances given")
        return values
    parts = grid.split(":")
    if len(parts) != 3:
        raise CliError(f"bad grid {grid!r}, expected <min>:<max>:<step>")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise CliError(f"grid bounds must be numbers: {grid!r}") from None
    if not (step > 0 and lo <= hi):
        raise CliError(f"bad grid {grid!r}: need min <= max and step > 0")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + k * step for k in range(n)]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

_INGEST_SPEC = {
    "noise_figure": (float, 7.0),
    "seed": (int, 0),
}


def cmd_ingest(args) -> int:
    params = _resolve(args, _INGEST_SPEC)
    raw_path = Path(args.raw)
    with open(raw_path, "r", encoding="utf-8") as fh:
        for line in fh:
            text = line.strip()
            if text and not text.startswith("#"):
                if text == traces.SIMPLE_HEADER:
                    raise CliError(
                        f"{raw_path} is already in the simple format; pass it to `train` directly"
                    )
                break
    records = traces.parse_raw(raw_path)
    cfg = traces.RadioConfig(noise_figure=params["noise_figure"])
    samples = traces.records_to_samples(records, cfg)

    out_dir = _out_dir(args, "ingest")
    traces.write_simple(samples, out_dir / "samples.csv")
    params["raw"] = str(raw_path)
    _write_manifest(out_dir, "ingest", params, [raw_path])
    print(f"ingest: {len(samples)} samples -> {out_dir / 'samples.csv'}")
    return 0


_TRAIN_SPEC = {
    "scenario": (str, metrics.FULL_SET),
    "n_trees": (int, 100),
    "max_depth": (int, 3),
    "learning_rate": (float, 0.1),
    "min_samples_leaf": (int, 5),
    "seed": (int, 0),
}


def cmd_train(args) -> int:
    params = _resolve(args, _TRAIN_SPEC)
    samples_path = Path(args.samples)
    samples = traces.parse_simple(samples_path)
    cfg = pathloss.TrainConfig(
        n_trees=params["n_trees"],
        max_depth=params["max_depth"],
        learning_rate=params["learning_rate"],
        min_samples_leaf=params["min_samples_leaf"],
    )

    inputs = [samples_path]
    if args.test is not None:
        test_path = Path(args.test)
        split = metrics.ScenarioSplit(
            name=metrics.FULL_SET, train=samples, test=traces.parse_simple(test_path)
        )
        inputs.append(test_path)
    else:
        split = metrics.make_split(samples, params["scenario"])

    model = pathloss.train(split.train, cfg)
    out_dir = _out_dir(args, "train")
    model_path = out_dir / "pathloss.model"
    pathloss.save_model(model, model_path)

    report = {
        "scenario": split.name,
        "n_train": len(split.train),
        "n_test": len(split.test),
        "train_rmse_db": pathloss.rmse(model, split.train),
        "test_rmse_db": pathloss.rmse(model, split.test),
        "train_range_m": list(model.train_range),
        "train_config": {
            "n_trees": cfg.n_trees,
            "max_depth": cfg.max_depth,
            "learning_rate": cfg.learning_rate,
            "min_samples_leaf": cfg.min_samples_leaf,
        },
    }
    _write_report(out_dir, report)
    params["samples"] = str(samples_path)
    if args.test is not None:
        params["test"] = str(args.test)
    _write_manifest(out_dir, "train", params, inputs)
    print(
        f"train: {split.name} scenario, train RMSE {report['train_rmse_db']:.3f} dB, "
        f"test RMSE {report['test_rmse_db']:.3f} dB -> {model_path}"
    )
    return 0


_FIT_FADING_SPEC = {
    "n_bins": (int, 100),
    "n_points": (int, 1000),
    "seed": (int, 0),
}


def cmd_fit_fading(args) -> int:
    params = _resolve(args, _FIT_FADING_SPEC)
    samples_path = Path(args.samples)
    samples = traces.parse_simple(samples_path)
    residuals = fading.extract_residuals(samples)
    selected = fading.select_fading(residuals.values, n_bins=params["n_bins"])
    table = fading.to_cdf_table(selected, n_points=params["n_points"])

    out_dir = _out_dir(args, "fit-fading")
    cdf_path = out_dir / "fading_cdf.csv"
    fading.write_cdf_table(table, cdf_path)

    candidates = {}
    hist, edges = np.histogram(
        residuals.values, bins=params["n_bins"],
        range=(residuals.values.min(), residuals.values.max()), density=True,
    )
    centres = 0.5 * (edges[:-1] + edges[1:])
    for fit in fading.fit_all(residuals.values):
        candidates[fit.family] = {
            "params": fit.param_dict(),
            "sse": float(np.sum((hist - fit.pdf(centres)) ** 2)),
        }
    report = {
        "selected_family": selected.family,
        "selected_params": selected.param_dict(),
        "selected_sse": selected.sse,
        "candidates": candidates,
        "n_residuals": int(residuals.values.size),
    }
    _write_report(out_dir, report)
    params["samples"] = str(samples_path)
    _write_manifest(out_dir, "fit-fading", params, [samples_path])
    print(f"fit-fading: selected {selected.family} {selected.param_dict()} -> {cdf_path}")
    return 0


_PREDICT_SPEC = {
    "seed": (int, 0),
}


def cmd_predict(args) -> int:
    _resolve(args, _PREDICT_SPEC)
    model_spec = _parse_model_spec(args.model)
    engine = _make_engine(model_spec)
    distances = _parse_distances(args.distances, args.grid)

    out_dir = _out_dir(args, "predict")
    pred_path = out_dir / "predictions.csv"
    with open(pred_path, "w", encoding="utf-8") as fh:
        fh.write("distance_m,predicted_loss_db\n")
        for d in distances:
            fh.write(f"{d!r},{engine.deterministic_loss(d)!r}\n")

    inputs = [Path(args.model)] if model_spec[0] == "mlpl" else []
    params = {"model": args.model, "n_distances": len(distances)}
    _write_manifest(out_dir, "predict", params, inputs)
    print(f"predict: {len(distances)} distances -> {pred_path}")
    return 0


_SIMULATE_SPEC = {
    "tx_power": (float, 7.0),
    "tx_gain": (float, -7.0),
    "rx_gain": (float, -7.0),
    "bandwidth": (float, 20.0),
    "noise_figure": (float, 7.0),
    "payload": (int, 1400),
    "duration": (float, -1.0),  # -1: run to the last waypoint
    "tick": (float, 1.0),
    "fading_sigma": (float, 0.0),
    "seed": (int, 0),
    "stream_id": (int, 0),
}


def cmd_simulate(args) -> int:
    params = _resolve(args, _SIMULATE_SPEC)
    model_spec = _parse_model_spec(args.model)
    traj = linksim.read_trajectory(args.trajectory, _parse_vec3(args.fixed))

    inputs = [Path(args.trajectory)]
    if model_spec[0] == "mlpl":
        inputs.append(Path(args.model))

    fading_pair = None
    if args.cdf is not None:
        table = fading.read_cdf_table(args.cdf)
        fading_pair = (table, RngStream(params["seed"], params["stream_id"]))
        inputs.append(Path(args.cdf))
    elif params["fading_sigma"] > 0:
        # Zero-mean Gaussian stand-in used when no fitted table is available.
        fit = fading.FadingFit("normal", (0.0, params["fading_sigma"]))
        fading_pair = (fading.to_cdf_table(fit), RngStream(params["seed"], params["stream_id"]))

    engine = _make_engine(model_spec, fading_pair)
    duration = params["duration"]
    if duration < 0:
        duration = traj.waypoints[-1][0]
    cfg = linksim.SimConfig(
        budget=LinkBudget(params["tx_power"], params["tx_gain"], params["rx_gain"]),
        bandwidth=params["bandwidth"],
        noise=traces.RadioConfig(noise_figure=params["noise_figure"]),
        payload=params["payload"],
        duration=duration,
        tick=params["tick"],
        seed=params["seed"],
    )
    linkrun = linksim.run(traj, engine, cfg)

    out_dir = _out_dir(args, "simulate")
    run_path = out_dir / "linkrun.csv"
    linksim.write_linkrun(linkrun, run_path)
    params.update({
        "model": args.model,
        "trajectory": str(args.trajectory),
        "fixed": args.fixed,
        "cdf": None if args.cdf is None else str(args.cdf),
        "duration": duration,
    })
    _write_manifest(out_dir, "simulate", params, inputs)
    mean_goodput = sum(r.goodput for r in linkrun.rows) / len(linkrun.rows)
    print(f"simulate: {len(linkrun.rows)} ticks, mean goodput {mean_goodput:.2f} Mbit/s -> {run_path}")
    return 0


_EVALUATE_SPEC = {
    "bin_width": (float, 1.0),
    "seed": (int, 0),
}


def _read_distance_loss_pairs(path) -> list:
    """Accept predictions, simple-sample, or link-run CSVs as (distance, loss) pairs."""
    with open(path, "r", encoding="utf-8") as fh:
        header = ""
        for line in fh:
            text = line.strip()
            if text and not text.startswith("#"):
                header = text
                break
    if header == linksim.LINKRUN_HEADER:
        rows = linksim.read_linkrun(path).rows
        return [traces.PathLossSample(r.distance, r.loss) for r in rows]
    if header == traces.SIMPLE_HEADER:
        return traces.parse_simple(path)
    if header == "distance_m,predicted_loss_db":
        pairs = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                text = raw.strip()
                if not text or text.startswith("#") or text == header:
                    continue
                parts = text.split(",")
                if len(parts) != 2:
                    raise FileFormatError(f"expected 2 fields, got {len(parts)}", path=path, line=lineno)
                try:
                    pairs.append(traces.PathLossSample(float(parts[0]), float(parts[1])))
                except ValueError as exc:
                    raise ValidationError(str(exc), path=path, line=lineno) from None
        return pairs
    raise FileFormatError(f"unrecognised header {header!r}", path=path)


def cmd_evaluate(args) -> int:
    params = _resolve(args, _EVALUATE_SPEC)
    pred_path = Path(args.pred)
    ref_path = Path(args.ref)
    model_pairs = _read_distance_loss_pairs(pred_path)
    real_pairs = _read_distance_loss_pairs(ref_path)

    model_curve = metrics.percentile_curve(model_pairs, params["bin_width"])
    real_curve = metrics.percentile_curve(real_pairs, params["bin_width"])
    diffs = metrics.percentile_diff(model_curve, real_curve)

    out_dir = _out_dir(args, "evaluate")
    metrics.write_percentile_curve(model_curve, out_dir / "percentile_model.csv")
    metrics.write_percentile_curve(real_curve, out_dir / "percentile_real.csv")
    metrics.write_percentile_diff(diffs, out_dir / "percentile_diff.csv")
    metrics.write_box_stats(metrics.box_stats([p.path_loss for p in model_pairs]),
                            out_dir / "box_model.csv")
    metrics.write_box_stats(metrics.box_stats([p.path_loss for p in real_pairs]),
                            out_dir / "box_real.csv")

    params.update({"pred": str(pred_path), "ref": str(ref_path)})
    _write_manifest(out_dir, "evaluate", params, [pred_path, ref_path])
    max_d50 = max((d.d50 for d in diffs), default=float("nan"))
    print(f"evaluate: {len(diffs)} shared bins, max median diff {max_d50:.2f} dB -> {out_dir}")
    return 0


_GEN_SYNTH_SPEC = {
    "exponent": (float, 2.2),
    "ref_distance": (float, 1.0),
    "ref_loss": (float, 47.0),
    "fading": (str, "normal:0,4"),
    "d_min": (float, 2.0),
    "d_max": (float, 24.0),
    "n_samples": (int, 10_000),
    "tx_power": (float, 7.0),
    "tx_gain": (float, -7.0),
    "rx_gain": (float, -7.0),
    "freq": (float, 5220.0),
    "bandwidth": (float, 20.0),
    "noise_figure": (float, 7.0),
    "seed": (int, 0),
    "stream_id": (int, 0),
}


def cmd_gen_synth(args) -> int:
    params = _resolve(args, _GEN_SYNTH_SPEC)
    cfg = synth.SynthConfig(
        pathloss=baselines.LogDistanceParams(
            ref_distance=params["ref_distance"],
            ref_loss=params["ref_loss"],
            exponent=params["exponent"],
        ),
        fading=_parse_fading_spec(params["fading"]),
        d_min=params["d_min"],
        d_max=params["d_max"],
        n_samples=params["n_samples"],
        tx_power=params["tx_power"],
        tx_gain=params["tx_gain"],
        rx_gain=params["rx_gain"],
        freq=params["freq"],
        bandwidth=params["bandwidth"],
        noise=traces.RadioConfig(noise_figure=params["noise_figure"]),
        seed=params["seed"],
        stream_id=params["stream_id"],
    )
    records = synth.generate_records(cfg)

    out_dir = _out_dir(args, "gen-synth")
    trace_path = out_dir / "raw_trace.csv"
    traces.write_raw(records, trace_path)
    _write_manifest(out_dir, "gen-synth", params, [])
    print(f"gen-synth: {len(records)} records -> {trace_path}")
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def _add_shared(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=None, help="base RNG seed (default 0)")
    parser.add_argument("--out", default=None, help="output base directory (default ./out)")
    parser.add_argument("--name", default=None, help="run name inside the output directory")
    parser.add_argument("--config", default=None, help="key=value config file; flags win")


def _add_spec_flags(parser: argparse.ArgumentParser, spec: dict):
    for dest, (convert, default) in spec.items():
        if dest == "seed":
            continue  # shared flag
        flag = "--" + dest.replace("_", "-")
        parser.add_argument(flag, type=convert, default=None, dest=dest,
                            help=f"default {default}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Trace-driven propagation twin: learn, fit, replay, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a raw trace into path-loss samples")
    p.add_argument("--raw", required=True, help="raw-format trace CSV")
    _add_spec_flags(p, _INGEST_SPEC)
    _add_shared(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("train", help="train the boosted-tree path-loss model")
    p.add_argument("--samples", required=True, help="simple-format samples CSV")
    p.add_argument("--test", default=None, help="external held-out samples CSV (full-set only)")
    _add_spec_flags(p, _TRAIN_SPEC)
    _add_shared(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("fit-fading", help="fit the fading distribution and export its CDF")
    p.add_argument("--samples", required=True, help="simple-format samples CSV")
    _add_spec_flags(p, _FIT_FADING_SPEC)
    _add_shared(p)
    p.set_defaults(fn=cmd_fit_fading)

    p = sub.add_parser("predict", help="evaluate a model over a set of distances")
    p.add_argument("--model", required=True,
                   help="model file, friis:<freq_mhz>, or logdist:<d0>,<ref_loss>,<n>")
    p.add_argument("--distances", default=None, help="comma-separated distances in metres")
    p.add_argument("--grid", default=None, help="<min>:<max>:<step> distance grid in metres")
    _add_spec_flags(p, _PREDICT_SPEC)
    _add_shared(p)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("simulate", help="replay a trajectory and estimate goodput")
    p.add_argument("--model", required=True,
                   help="model file, friis:<freq_mhz>, or logdist:<d0>,<ref_loss>,<n>")
    p.add_argument("--cdf", default=None, help="fading CDF table CSV (omit for none)")
    p.add_argument("--trajectory", required=True, help="trajectory CSV (t_s,x,y,z)")
    p.add_argument("--fixed", required=True, help="fixed node position as x,y,z")
    _add_spec_flags(p, _SIMULATE_SPEC)
    _add_shared(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("evaluate", help="percentile curves, diffs, and box stats")
    p.add_argument("--pred", required=True, help="predictions, samples, or link-run CSV")
    p.add_argument("--ref", required=True, help="reference samples CSV")
    _add_spec_flags(p, _EVALUATE_SPEC)
    _add_shared(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("gen-synth", help="generate a synthetic raw trace with known truth")
    _add_spec_flags(p, _GEN_SYNTH_SPEC)
    _add_shared(p)
    p.set_defaults(fn=cmd_gen_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # surfaced as a single machine-parseable line
        print(f"{PROG}: {_error_code(exc)}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
