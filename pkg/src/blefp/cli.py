"""Command-line entry point: ``blefp <command> [options]``.

Exit status is 0 on success, 2 for configuration errors and 3 when a
validation or invariant check fails.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .config import EXPERIMENT_PRESETS, RunConfig, apply_experiment_preset, load_config
from .errors import BlefpError, ConfigError, GradientMismatch, UnknownImpairmentField
from .features import METHODS, extract, feature_csv_text, stack, tpd, window_length
from .fleet import (
    channel_center_hz,
    generate_dataset,
    load_dataset,
    sample_fleet,
    save_dataset,
    scenario_to_dict,
)
from .gfsk import (
    ChannelParams,
    ImpairmentSet,
    access_address_bits,
    apply_channel,
    bits_from_bytes,
    impairment_sweep,
    modulate_frame,
    resolve_impairment_field,
)
from .ingest import CaptureSpec, EnergyDetect, Preframed, capture_spec_from_manifest, manifest_path, read_capture, write_capture
from .iq import FrameMeta, normalize_power
from .nn import load_model, predict, save_model, train
from .nn.gradcheck import default_check

log = logging.getLogger("blefp")

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION = 0, 2, 3


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def _ints(text: str):
    return [int(v) for v in _floats(text)]


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _field(name: str) -> str:
    try:
        return resolve_impairment_field(name)
    except UnknownImpairmentField as exc:
        raise ConfigError(str(exc.args[0])) from exc


def _impairments(cfg: RunConfig, pairs) -> ImpairmentSet:
    imp = ImpairmentSet.ideal(cfg.gfsk)
    for item in pairs or []:
        key, _, value = item.partition("=")
        try:
            imp = dataclasses.replace(imp, **{_field(key.strip()): float(value)})
        except ValueError as exc:
            raise ConfigError(f"bad impairment setting {item!r}") from exc
    return imp.validate()


def cmd_synth(args, cfg: RunConfig) -> int:
    pdu = access_address_bits() + (bits_from_bytes(bytes.fromhex(args.pdu_hex)) if args.pdu_hex else ())
    imp = _impairments(cfg, args.set)
    meta = FrameMeta(None, args.channel, args.label, pdu)
    frame = modulate_frame(pdu, cfg.gfsk, imp, meta)
    ch = ChannelParams(snr_db=args.snr, distance_m=args.distance, carrier_hz=channel_center_hz(args.channel))
    frame = apply_channel(frame, ch, cfg.seed)
    out = Path(args.out)
    write_capture([frame], CaptureSpec(out, cfg.gfsk.sample_rate_hz, args.layout, Preframed(len(frame))),
                  {"impairments": dataclasses.asdict(imp), "seed": cfg.seed})
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["n", "i", "q"])
            for n, z in enumerate(frame.samples):
                wr.writerow([n, repr(z.real), repr(z.imag)])
    print(f"wrote {len(frame)} samples to {out}")
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    key = _field(args.impairment)
    values = _floats(args.values)
    if not values:
        raise ConfigError("--values is empty")
    base = _impairments(cfg, args.set)
    w = window_length(cfg.gfsk)
    frames = impairment_sweep(key, values, cfg.gfsk, base)
    curves = [(v, tpd(f, w).data[0]) for v, f in frames]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["impairment", "value"] + [f"s{k}" for k in range(w.L - 1)])
        for v, y in curves:
            wr.writerow([key, repr(v)] + [repr(float(t)) for t in y])
    raw = None
    if key == "theta_po_rad":
        raw = [(v, normalize_power(f.samples[: w.L]).real) for v, f in frames]
        raw_path = out.with_name(out.stem + "_rawiq.csv")
        with open(raw_path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["impairment", "value", "component"] + [f"s{k}" for k in range(w.L)])
            for v, f in frames:
                x = normalize_power(f.samples[: w.L])
                wr.writerow([key, repr(v), "I"] + [repr(float(t)) for t in x.real])
                wr.writerow([key, repr(v), "Q"] + [repr(float(t)) for t in x.imag])
    if args.figures:
        from .plotting import plot_sweep

        plot_sweep(curves, key, out.with_suffix(".png"), raw_curves=raw, n_show=args.show)
    print(f"wrote {len(curves)} TPD curves to {out}")
    return EXIT_OK


def cmd_fleet(args, cfg: RunConfig) -> int:
    scen = cfg.scenario_map()
    if args.scenario not in scen:
        raise ConfigError(f"unknown scenario {args.scenario!r}; known: {', '.join(sorted(scen))}")
    fleet = sample_fleet(cfg.fleet)
    ds = generate_dataset(fleet, scen[args.scenario], args.frames, cfg.gfsk, cfg.seed, cfg.threads)
    save_dataset(ds, args.out, cfg.fleet, args.layout)
    _write_json(Path(args.out).with_name(Path(args.out).name + ".devices.json"),
                [{"device_id": d.device_id, **dataclasses.asdict(d.imp)} for d in fleet])
    print(f"wrote {len(ds.items)} frames ({len(fleet)} devices, {args.scenario}) to {args.out}")
    return EXIT_OK


def _load_frames(args, cfg: RunConfig):
    if manifest_path(args.capture).exists():
        spec = capture_spec_from_manifest(args.capture)
    else:
        if not args.frame_len:
            raise ConfigError("capture has no manifest; pass --frame-len and --sample-rate")
        spec = CaptureSpec(args.capture, args.sample_rate or cfg.gfsk.sample_rate_hz, args.layout,
                           Preframed(args.frame_len))
    return read_capture(spec)


def cmd_extract(args, cfg: RunConfig) -> int:
    frames = _load_frames(args, cfg)
    w = window_length(cfg.gfsk)
    tensors = [extract(f, args.method, w) for f in frames]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(feature_csv_text(tensors))
    print(f"wrote {len(tensors)} {args.method.upper()} tensors to {args.out}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    if args.capture:
        ds = load_dataset(args.capture)
    else:
        scen = cfg.scenario_map()[cfg.experiment.train_scenarios[0]]
        ds = generate_dataset(sample_fleet(cfg.fleet), scen, cfg.experiment.frames_per_device_train,
                              cfg.gfsk, cfg.seed, cfg.threads)
    method = args.method.upper()
    w = window_length(cfg.gfsk)
    x = stack([extract(f, method, w) for f in ds.frames], length=None)
    y = ds.labels
    model = train(x, y, cfg.network(int(y.max()) + 1))
    save_model(model, args.out)
    acc = float(np.mean(predict(model, x) == y))
    print(f"trained {method} model on {len(y)} frames: training accuracy {acc:.4f}, "
          f"final loss {model.history[-1]:.4f}; saved to {args.out}")
    return EXIT_OK


def cmd_predict(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    frames = _load_frames(args, cfg)
    w = window_length(cfg.gfsk)
    x = stack([extract(f, args.method, w) for f in frames], length=model.in_length if args.method.upper() == "RAWIQ" else None)
    pred = predict(model, x)
    for f, p in zip(frames, pred):
        print(f"{f.meta.device_id if f.meta.device_id is not None else ''},{int(p)}")
    return EXIT_OK


def _manifest(command: str, cfg: RunConfig, outputs, extra=None) -> dict:
    m = {"command": command, "config": cfg.to_dict(), "outputs": sorted(str(p.name) for p in outputs)}
    if extra:
        m.update(extra)
    return m


def _grid_figures(tables, out: Path):
    from .plotting import plot_accuracy_grid, plot_confusion

    methods = list(dict.fromkeys(m for t in tables for m in t.methods()))
    for method in methods:
        cols = list(dict.fromkeys(s for t in tables for (m, s) in t.accuracy if m == method))
        grid = [[t.accuracy.get((method, c), np.nan) for c in cols] for t in tables]
        plot_accuracy_grid(grid, [t.train_scenario for t in tables], cols, method, out / f"accuracy_{method}.png")
    for t in tables:
        for (method, scen), cm in t.confusion.items():
            plot_confusion(cm, f"{method}: {t.train_scenario} -> {scen}",
                           out / f"confusion_{method}_{t.train_scenario}_to_{scen}.png")


def cmd_experiment(args, cfg: RunConfig) -> int:
    if args.preset:
        apply_experiment_preset(cfg, args.preset)
    if args.methods:
        cfg.experiment.methods = [m.strip().upper() for m in args.methods.split(",")]
    out = Path(args.out)
    tables = []
    for train_name in cfg.experiment.train_scenarios:
        tables.append(ev.run_experiment(cfg.experiment_spec(train_name)))
    outputs = ev.write_accuracy_grids(tables, out)
    for t in tables:
        outputs += ev.write_confusions(t, out)
    with open(out / "timing.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["train_scenario", "method", "preprocess_s", "train_s", "inference_s"])
        for t in tables:
            for m, tm in t.timing.items():
                wr.writerow([t.train_scenario, m] + [f"{tm[k]:.6g}" for k in ("preprocess_s", "train_s", "inference_s")])
    _write_json(out / "manifest.json", _manifest("experiment", cfg, outputs, {
        "scenarios": {k: scenario_to_dict(v) for k, v in cfg.scenario_map().items()
                      if k in set(cfg.experiment.train_scenarios) | set(cfg.experiment.test_scenarios)},
    }))
    if args.figures:
        _grid_figures(tables, out)
    for t in tables:
        for (m, s), a in t.accuracy.items():
            print(f"{m:6s} {t.train_scenario} -> {s}: {a:.4f}")
    return EXIT_OK


def cmd_scalability(args, cfg: RunConfig) -> int:
    counts = _ints(args.counts) if args.counts else cfg.experiment.device_counts
    out = Path(args.out)
    results = ev.scalability_sweep(cfg.experiment_spec(), counts)
    path = ev.write_scalability(results, out / "scalability.csv")
    _write_json(out / "manifest.json", _manifest("scalability", cfg, [path], {"device_counts": counts}))
    if args.figures:
        from .plotting import plot_scalability

        plot_scalability(results, out / "scalability.png")
    for c, t in results.items():
        print(c, {f"{m}/{s}": round(a, 4) for (m, s), a in t.accuracy.items()})
    return EXIT_OK


def cmd_timing(args, cfg: RunConfig) -> int:
    spec = cfg.experiment_spec()
    report = ev.timing_report(spec, runs=cfg.experiment.timing_runs, epochs=cfg.experiment.timing_epochs)
    out = Path(args.out)
    path = ev.write_timing(report, out / "timing.csv", spec.train_scenario)
    _write_json(out / "manifest.json", _manifest("timing", cfg, [path]))
    for m, t in report.items():
        print(f"{m:6s} preprocess/frame {t['preprocess_s']:.3g}s  train {t['train_s']:.3g}s  "
              f"inference {t['inference_s']:.3g}s")
    return EXIT_OK


def _corrupt(grads):
    bad = dict(grads)
    bad["conv0.w"] = grads["conv0.w"] * 1.01
    return bad


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    failed = False
    for mode in ("train", "eval"):
        results = default_check(seed=cfg.seed, mode=mode, backward_hook=_corrupt if args.corrupt else None)
        for r in results.values():
            status = "ok" if r.passed else "FAIL"
            print(f"{mode:5s} {r.name:10s} n={r.n:4d} max_rel={r.max_rel_error:.3e} "
                  f"max_abs={r.max_abs_error:.3e} {status}")
            failed |= not r.passed
        print(f"{mode:5s} max relative error {max(r.max_rel_error for r in results.values()):.3e}")
    if failed:
        raise GradientMismatch("analytic gradients disagree with finite differences")
    return EXIT_OK


def cmd_ingest(args, cfg: RunConfig) -> int:
    rate = args.sample_rate or cfg.gfsk.sample_rate_hz
    if args.frame_len:
        framing = Preframed(args.frame_len)
    else:
        framing = EnergyDetect(args.threshold, args.min_gap, args.smooth, args.align_offset)
    frames = read_capture(CaptureSpec(args.input, rate, args.layout, framing))
    frames = [f.replace(device_id=args.device_id, channel_index=args.channel, domain_label=args.label)
              for f in frames]
    write_capture(frames, CaptureSpec(args.out, rate, "INTERLEAVED_F64", Preframed(len(frames[0]))))
    if args.features:
        w = window_length(cfg.gfsk)
        usable = [f for f in frames if len(f) >= w.L or args.method.upper() == "RAWIQ"]
        Path(args.features).write_text(feature_csv_text([extract(f, args.method, w) for f in usable]))
    print(f"ingested {len(frames)} frames from {args.input} into {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blefp", description="BLE RF fingerprinting with transient phase derivatives")
    p.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("synth", cmd_synth, "synthesize one impaired frame")
    sp.add_argument("--out", required=True)
    sp.add_argument("--pdu-hex", default="")
    sp.add_argument("--set", action="append", metavar="FIELD=VALUE")
    sp.add_argument("--channel", type=int, default=1)
    sp.add_argument("--distance", type=float, default=0.0)
    sp.add_argument("--snr", type=float)
    sp.add_argument("--label", default="synth")
    sp.add_argument("--layout", default="INTERLEAVED_F64", choices=["INTERLEAVED_F32", "INTERLEAVED_F64"])
    sp.add_argument("--csv")

    sp = add("sweep", cmd_sweep, "TPD curves across one impairment")
    sp.add_argument("--impairment", required=True)
    sp.add_argument("--values", required=True, help="comma-separated, e.g. -50e3,0,50e3")
    sp.add_argument("--set", action="append", metavar="FIELD=VALUE", help="base impairment values")
    sp.add_argument("--out", required=True)
    sp.add_argument("--figures", action="store_true")
    sp.add_argument("--show", type=int, help="samples per curve in the figure")

    sp = add("fleet", cmd_fleet, "generate a labelled synthetic dataset")
    sp.add_argument("--scenario", default="wired-ch1")
    sp.add_argument("--frames", type=int, default=20)
    sp.add_argument("--out", required=True)
    sp.add_argument("--layout", default="INTERLEAVED_F64", choices=["INTERLEAVED_F32", "INTERLEAVED_F64"])

    for name, fn, help_ in (("extract", cmd_extract, "features from a capture to CSV"),
                            ("predict", cmd_predict, "classify frames of a capture")):
        sp = add(name, fn, help_)
        sp.add_argument("--capture", required=True)
        sp.add_argument("--method", default="TPD", type=str.upper, choices=METHODS)
        sp.add_argument("--frame-len", type=int)
        sp.add_argument("--sample-rate", type=float)
        sp.add_argument("--layout", default="INTERLEAVED_F32", choices=["INTERLEAVED_F32", "INTERLEAVED_F64"])
        if name == "extract":
            sp.add_argument("--out", required=True)
        else:
            sp.add_argument("--model", required=True)

    sp = add("train", cmd_train, "train a classifier and save a checkpoint")
    sp.add_argument("--capture", help="labelled capture from `blefp fleet`; default synthesizes one")
    sp.add_argument("--method", default="TPD", type=str.upper, choices=METHODS)
    sp.add_argument("--out", required=True)

    sp = add("experiment", cmd_experiment, "cross-domain accuracy grids")
    sp.add_argument("--preset", choices=sorted(EXPERIMENT_PRESETS))
    sp.add_argument("--methods", help="comma-separated subset, e.g. TPD,TP")
    sp.add_argument("--out", required=True)
    sp.add_argument("--figures", action="store_true")

    sp = add("scalability", cmd_scalability, "accuracy versus number of devices")
    sp.add_argument("--counts")
    sp.add_argument("--out", required=True)
    sp.add_argument("--figures", action="store_true")

    sp = add("timing", cmd_timing, "preprocessing/training/inference timing")
    sp.add_argument("--out", required=True)

    sp = add("gradcheck", cmd_gradcheck, "finite-difference check of backprop")
    sp.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)

    sp = add("ingest", cmd_ingest, "segment a raw IQ recording into frames")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--sample-rate", type=float)
    sp.add_argument("--layout", default="INTERLEAVED_F32", choices=["INTERLEAVED_F32", "INTERLEAVED_F64"])
    sp.add_argument("--frame-len", type=int, help="fixed framing instead of energy detection")
    sp.add_argument("--threshold", type=float, default=0.1)
    sp.add_argument("--min-gap", type=int, default=16)
    sp.add_argument("--smooth", type=int, default=5)
    sp.add_argument("--align-offset", type=int, default=0)
    sp.add_argument("--device-id", type=int)
    sp.add_argument("--channel", type=int)
    sp.add_argument("--label", default="capture")
    sp.add_argument("--features", help="also write features CSV here")
    sp.add_argument("--method", default="TPD", type=str.upper, choices=METHODS)
    return p


def _join_value_lists(argv):
    # "--values -50e3,0" would otherwise be read as an unknown option
    out = []
    for tok in argv:
        if out and out[-1] in ("--values", "--counts") and tok.startswith("-"):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_value_lists(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = _config(args)
        return args.fn(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlefpError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
