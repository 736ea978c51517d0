"""Command line front end: synth, train, eval, predict, bench.

Every failure ends with one ``error_code: message`` line on stderr and a
nonzero status (2 usage/config, 3 numeric, 4 I/O).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .dataio import Dataset, _parse, dataset_to_csv, load_csv, synth_generate
from .downstream import CLASSIFICATION, REGRESSION
from .errors import ConfigError, MissingColumn, SpatialDGError
from .trainer import (
    TrainConfig,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    split_domains,
    train,
)

log = logging.getLogger("spatialdg")

KINDS = {"regression": REGRESSION, "classification": CLASSIFICATION, CLASSIFICATION: CLASSIFICATION}

# flag dest -> TrainConfig field
CONFIG_FLAGS = {
    "k": "k", "dz": "d_z", "layers": "n_layers", "epochs": "epochs", "lr": "learning_rate",
    "reg_weight": "reg_weight", "seed": "seed", "test_fraction": "test_fraction",
    "mode": "mode", "kind": "kind", "task_hidden": "task_hidden", "hyper_hidden": "hyper_hidden",
    "pooling": "pooling", "query_init": "query_init", "threads": "threads",
    "equirectangular": "equirectangular", "loss": "loss",
}


class UsageError(SpatialDGError):
    code = "usage_error"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _int_list(text: str) -> list[int]:
    text = text.strip()
    return [int(t) for t in text.split(",")] if text else []


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _kind(text: str) -> str:
    if text not in KINDS:
        raise argparse.ArgumentTypeError(f"expected regression or classification, got {text!r}")
    return KINDS[text]


# ----------------------------------------------------------------- helpers


def fingerprint(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def write_manifest(path: Path, command: str, argv: Sequence[str], config: Optional[dict],
                   seed: Optional[int], data_fp: Optional[str]) -> None:
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "dataset_fingerprint": data_fp,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
    }
    path.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _schema_kwargs(args, fallback: Optional[dict] = None) -> dict:
    fallback = fallback or {}
    feats = args.feature_cols if args.feature_cols is not None else fallback.get("feature_cols")
    return dict(
        lat_col=args.lat_col or fallback.get("lat_col", "lat"),
        lon_col=args.lon_col or fallback.get("lon_col", "lon"),
        target_col=args.target_col or fallback.get("target_col", "y"),
        feature_cols=feats,
    )


def _add_schema(p: argparse.ArgumentParser):
    p.add_argument("--lat-col", default=None, help="latitude column (default: lat)")
    p.add_argument("--lon-col", default=None, help="longitude column (default: lon)")
    p.add_argument("--target-col", default=None, help="target column (default: y)")
    p.add_argument("--feature-cols", type=_str_list, default=None,
                   help="comma-separated feature columns (default: all remaining columns)")


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None, help="JSON file with config overrides")
    p.add_argument("--mode", choices=["signn", "signn_g", "erm"], default=None)
    p.add_argument("--kind", type=_kind, default=None)
    p.add_argument("--k", type=_positive_int, default=None, help="neighbors per node")
    p.add_argument("--dz", type=_positive_int, default=None, help="embedding dimension")
    p.add_argument("--layers", type=_positive_int, default=None, help="interpolation layers")
    p.add_argument("--epochs", type=_positive_int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--reg-weight", type=_nonneg_float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=None)
    p.add_argument("--task-hidden", type=_int_list, default=None,
                   help="hidden widths of the task model, e.g. 8,8 (default: linear)")
    p.add_argument("--hyper-hidden", type=_int_list, default=None)
    p.add_argument("--pooling", choices=["domain_mean", "sample"], default=None)
    p.add_argument("--loss", choices=["auto", "mse", "bce"], default=None)
    p.add_argument("--query-init", choices=["mean", "zero"], default=None)
    p.add_argument("--equirectangular", action="store_true", default=None,
                   help="scale longitude by cos(mean latitude) before building the graph")
    p.add_argument("--raw-distances", action="store_true",
                   help="feed raw edge lengths instead of lengths over the mean edge length")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="BLAS threads; 1 (default) is bitwise reproducible")


def resolve_config(args, overrides: Optional[dict] = None) -> TrainConfig:
    """Defaults, then ``--config`` file, then explicit flags."""
    values: dict = {}
    if getattr(args, "config", None) is not None:
        try:
            values.update(json.loads(args.config.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
    for dest, name in CONFIG_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    if getattr(args, "raw_distances", False):
        values["standardize_distances"] = False
    values.update(overrides or {})
    return TrainConfig.from_dict(values)


def _load_data(args, kind: str, schema: Optional[dict] = None) -> tuple[Dataset, bytes]:
    raw = Path(args.data).read_bytes()
    return load_csv(args.data, kind=kind, **_schema_kwargs(args, schema)), raw


def _split(dataset: Dataset, config: TrainConfig):
    train_ids, test_ids = split_domains(dataset.domains, config.test_fraction, config.seed)
    return train_ids, test_ids


def _emit(text: str, out: Optional[Path]):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_synth(args, argv) -> int:
    ds = synth_generate(args.locations, args.samples, args.features, args.noise,
                        kind=args.kind, seed=args.seed, field=args.field)
    text = dataset_to_csv(ds)
    args.out.write_text(text, encoding="utf-8")
    cfg = dict(locations=args.locations, samples=args.samples, features=args.features,
               noise=args.noise, kind=args.kind, field=args.field)
    write_manifest(_manifest_path(args.out), "synth", argv, cfg, args.seed,
                   fingerprint(text.encode("utf-8")))
    print(f"wrote {sum(d.n for d in ds.domains)} rows to {args.out}")
    return 0


def cmd_train(args, argv) -> int:
    config = resolve_config(args)
    dataset, raw = _load_data(args, config.kind)
    train_ids, test_ids = _split(dataset, config)
    history_path = args.history or args.out.with_name(args.out.stem + ".history.csv")
    write_manifest(_manifest_path(args.out), "train", argv, config.to_dict(), config.seed,
                   fingerprint(raw))

    model = train(dataset.subset(train_ids), config)
    save_checkpoint(model, args.out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "objective"])
    for epoch, value in enumerate(model.history):
        w.writerow([epoch, repr(value)])
    history_path.write_text(buf.getvalue(), encoding="utf-8")
    print(f"trained {config.mode} on {len(train_ids)} locations "
          f"({len(test_ids)} held out); final objective {model.history[-1]:.6g}")
    return 0


def _test_domains(model, dataset: Dataset, include_seen: bool):
    seen = {(float(lon), float(lat)) for lon, lat in model.seen_coords}
    doms = [d for d in dataset.domains if include_seen or tuple(d.location.coord) not in seen]
    if not doms:
        raise ConfigError("no unseen locations in the data; pass --include-seen to score seen ones")
    return doms


def cmd_eval(args, argv) -> int:
    model = load_checkpoint(args.checkpoint)
    dataset, _ = _load_data(args, model.config.kind, model.schema)
    doms = _test_domains(model, dataset, args.include_seen)
    report = evaluate(model, doms)
    _emit(json.dumps(report.to_dict(), indent=1) + "\n", args.out)
    if args.predictions is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lat", "lon", "prediction", "target"])
        for d, preds in zip(doms, report.predictions):
            for p, y in zip(preds, d.ys):
                w.writerow([d.key[0], d.key[1], repr(float(p)), repr(float(y))])
        args.predictions.write_text(buf.getvalue(), encoding="utf-8")
    if args.plot is not None:
        args.plot.write_text(error_map_svg(report.per_domain, report.metric_name), encoding="utf-8")
    return 0


def cmd_predict(args, argv) -> int:
    model = load_checkpoint(args.checkpoint)
    schema = model.schema or {}
    rows: list[tuple[float, float, list[float]]] = []
    if args.input is not None:
        rows = _read_predict_csv(args.input, _schema_kwargs(args, schema))
    else:
        if args.lat is None or args.lon is None or args.features is None:
            raise UsageError("give --lat, --lon and --features, or --input")
        rows = [(args.lat, args.lon, args.features)]
    lines = []
    for lat, lon, feats in rows:
        pred = model.predict((lon, lat), np.asarray(feats, dtype=float)[None, :])
        lines.append(repr(float(pred[0])))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _read_predict_csv(path: Path, schema: dict):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        body = [r for r in reader if any(c.strip() for c in r)]
    feats = schema["feature_cols"]
    for col in (schema["lat_col"], schema["lon_col"], *feats):
        if col not in header:
            raise MissingColumn(f"column {col!r} not found in header {header}")
    pos = {h: i for i, h in enumerate(header)}
    rows = []
    for r, row in enumerate(body, start=1):
        lat = _parse(row[pos[schema["lat_col"]]].strip(), r, schema["lat_col"])
        lon = _parse(row[pos[schema["lon_col"]]].strip(), r, schema["lon_col"])
        rows.append((lat, lon, [_parse(row[pos[c]].strip(), r, c) for c in feats]))
    return rows


def cmd_bench(args, argv) -> int:
    if args.data is not None:
        kind = args.kind or REGRESSION
        dataset, raw = _load_data(args, kind)
    else:
        kind = args.kind or REGRESSION
        dataset = synth_generate(args.locations, args.samples, args.features, args.noise,
                                 kind=kind, seed=args.data_seed, field=args.field)
        raw = dataset_to_csv(dataset).encode("utf-8")
    base = resolve_config(args, {"kind": kind, "mode": "signn"})
    train_ids, test_ids = _split(dataset, base)
    split_fp = fingerprint(json.dumps([train_ids, test_ids]).encode())
    if args.out is not None:
        write_manifest(_manifest_path(args.out), "bench", argv, base.to_dict(), base.seed,
                       fingerprint(raw))

    rows = []
    test = [dataset.domains[i] for i in test_ids]
    for mode in ("signn", "signn_g", "erm"):
        cfg = resolve_config(args, {"kind": kind, "mode": mode})
        model = train(dataset.subset(train_ids), cfg)
        rep = evaluate(model, test)
        rows.append({"mode": mode, "metric_name": rep.metric_name, "overall": rep.overall,
                     "learning_rate": cfg.learning_rate, "split_fingerprint": split_fp,
                     "train_ids": train_ids, "test_ids": test_ids})
    report = {"dataset_fingerprint": fingerprint(raw), "split_fingerprint": split_fp, "rows": rows}
    _emit(json.dumps(report, indent=1) + "\n", args.out)
    for r in rows:
        print(f"{r['mode']:8s} {r['metric_name']} {r['overall']:.4f}", file=sys.stderr)
    return 0


# -------------------------------------------------------------------- plot


def _color(t: float) -> str:
    # blue (low) to red (high)
    lo, hi = (49, 54, 149), (215, 48, 39)
    r, g, b = (round(a + (c - a) * t) for a, c in zip(lo, hi))
    return f"#{r:02x}{g:02x}{b:02x}"


def error_map_svg(per_domain: Sequence[dict], metric: str, size: int = 480) -> str:
    """Scatter of test locations (lon right, lat up) colored by their metric."""
    pad, bar = 30, 40
    lons = [d["lon"] for d in per_domain]
    lats = [d["lat"] for d in per_domain]
    vals = [d["value"] for d in per_domain if d["value"] is not None]
    x0, x1 = min(lons), max(lons)
    y0, y1 = min(lats), max(lats)
    sx = (size - 2 * pad) / ((x1 - x0) or 1.0)
    sy = (size - 2 * pad) / ((y1 - y0) or 1.0)
    v0, v1 = (min(vals), max(vals)) if vals else (0.0, 1.0)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + bar}" height="{size}" '
        f'viewBox="0 0 {size + bar} {size}">',
        f'<rect x="0" y="0" width="{size + bar}" height="{size}" fill="white"/>',
        f'<text x="{pad}" y="{pad - 10}" font-size="12" font-family="sans-serif">'
        f'per-location {metric}</text>',
    ]
    for d in per_domain:
        cx = pad + (d["lon"] - x0) * sx
        cy = size - pad - (d["lat"] - y0) * sy
        if d["value"] is None:
            fill, label = "#999999", "n/a"
        else:
            fill = _color((d["value"] - v0) / ((v1 - v0) or 1.0))
            label = f"{d['value']:.4g}"
        parts.append(f'<circle class="site" cx="{cx:.2f}" cy="{cy:.2f}" r="5" fill="{fill}" '
                     f'stroke="black" stroke-width="0.5"><title>{label}</title></circle>')
    steps = 20
    h = (size - 2 * pad) / steps
    for i in range(steps):
        y = size - pad - (i + 1) * h
        parts.append(f'<rect x="{size + 5}" y="{y:.2f}" width="12" height="{h + 0.5:.2f}" '
                     f'fill="{_color((i + 0.5) / steps)}"/>')
    parts.append(f'<text x="{size}" y="{size - pad + 14}" font-size="10" '
                 f'font-family="sans-serif">{v0:.3g}</text>')
    parts.append(f'<text x="{size}" y="{pad - 4}" font-size="10" font-family="sans-serif">{v1:.3g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spatialdg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic heterogeneous dataset")
    p.add_argument("--locations", type=_positive_int, default=200)
    p.add_argument("--samples", type=_positive_int, default=20)
    p.add_argument("--features", type=_positive_int, default=4)
    p.add_argument("--noise", type=_nonneg_float, default=0.1)
    p.add_argument("--kind", type=_kind, default=REGRESSION)
    p.add_argument("--field", choices=["heterogeneous", "constant"], default="heterogeneous")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a model on the training split of a CSV")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="checkpoint path (JSON)")
    p.add_argument("--history", type=Path, default=None,
                   help="epoch,objective CSV (default: <out stem>.history.csv)")
    _add_schema(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on locations it has not seen")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="report path (default: stdout)")
    p.add_argument("--plot", type=Path, default=None, help="write an SVG error map")
    p.add_argument("--predictions", type=Path, default=None, help="write per-sample predictions")
    p.add_argument("--include-seen", action="store_true", help="also score training locations")
    _add_schema(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict at arbitrary coordinates")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--lat", type=float, default=None)
    p.add_argument("--lon", type=float, default=None)
    p.add_argument("--features", type=lambda s: [float(v) for v in s.split(",")], default=None,
                   help="comma-separated raw feature values")
    p.add_argument("--input", type=Path, default=None, help="CSV with lat, lon and feature columns")
    p.add_argument("--out", type=Path, default=None)
    _add_schema(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="signn vs signn_g vs erm on one split")
    p.add_argument("--data", type=Path, default=None, help="CSV (default: synthetic data)")
    p.add_argument("--locations", type=_positive_int, default=200)
    p.add_argument("--samples", type=_positive_int, default=20)
    p.add_argument("--features", type=_positive_int, default=4)
    p.add_argument("--noise", type=_nonneg_float, default=0.1)
    p.add_argument("--field", choices=["heterogeneous", "constant"], default="heterogeneous")
    p.add_argument("--data-seed", type=int, default=7)
    p.add_argument("--out", type=Path, default=None)
    _add_schema(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args, argv)
    except SpatialDGError as exc:
        print(f"{exc.code}: {exc}".replace("\n", " "), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"io_error: {exc}".replace("\n", " "), file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
