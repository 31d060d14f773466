"""``carewatch`` command line entry point.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import dsp
from . import simulator as sim
from .errors import CareWatchError
from .nn import TrainConfig, load_model, save_model

log = logging.getLogger("carewatch")

DEFAULTS = {
    "activity": {"epochs": 10, "lr": 0.05, "batch_size": 16},
    "depression": {"epochs": 8, "lr": 0.02, "batch_size": 8},
    "cognitive": {"epochs": 10, "lr": 0.05, "batch_size": 4},
}


class UsageError(Exception):
    pass


def _dims(text):
    try:
        dims = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if len(dims) != 3 or min(dims) < 2:
        raise argparse.ArgumentTypeError("dims must be three integers >= 2, e.g. 16,16,16")
    return dims


def _positive(kind):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
        return v
    return parse


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _existing(path):
    if not os.path.exists(path):
        raise argparse.ArgumentTypeError(f"no such file or directory: {path}")
    return path


def _kinds(text):
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    for k in kinds:
        if k not in sim.KINDS:
            raise argparse.ArgumentTypeError(f"unknown kind {k!r}; choose from {', '.join(sim.KINDS)}")
    if len({sim.modality(k) for k in kinds}) != 1:
        raise argparse.ArgumentTypeError("all kinds in one call must share a modality")
    return kinds


def _train_args(p, task):
    d = DEFAULTS[task]
    p.add_argument("--seed", type=int, default=0, help="seed for initialization and shuffling")
    p.add_argument("--epochs", type=_positive(int), default=d["epochs"], help="training epochs")
    p.add_argument("--lr", type=_positive(float), default=d["lr"], help="SGD learning rate")
    p.add_argument("--batch-size", type=_positive(int), default=d["batch_size"], help="mini-batch size")
    p.add_argument("--validation-split", type=float, default=0.0, help="held-out fraction in [0, 1)")
    p.add_argument("--out", required=True, help="model file to write")


def build_parser():
    parser = argparse.ArgumentParser(prog="carewatch", description=__doc__.splitlines()[0])
    parser.add_argument("--deterministic", action="store_true",
                        help="suppress wall-clock fields so output is byte-for-byte reproducible")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", help="generate synthetic traces, audio or pen strokes")
    p.add_argument("--kind", type=_kinds, required=True, help="kind or comma list: " + ", ".join(sim.KINDS))
    p.add_argument("--duration", type=_positive(float), required=True, help="seconds per trace")
    p.add_argument("--rate", type=_positive(float), help="sample rate in Hz (modality default if omitted)")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--count", type=_positive(int), default=1, help="traces per kind (>1 writes a dataset)")
    p.add_argument("--inject-falls", metavar="START:COUNT",
                   help="accelerometer traces: overwrite COUNT seconds from START with falls")
    p.add_argument("--manifest", help="manifest path for accelerometer datasets (default OUT.manifest.json)")
    p.add_argument("--out", required=True, help="output file (or directory for audio/stroke datasets)")

    p = sub.add_parser("train-activity", help="train the accelerometer activity CNN")
    p.add_argument("--data", type=_existing, required=True, help="activity JSONL file")
    p.add_argument("--manifest", type=_existing, required=True, help="label -> group manifest JSON")
    p.add_argument("--arch", choices=("1d", "3d"), default="1d", help="1d convolutions over time or the 3d volume variant")
    p.add_argument("--rate", type=_positive(float), default=50.0, help="model sample rate (Hz)")
    p.add_argument("--window-seconds", type=_positive(float), default=1.0, help="window length in seconds")
    p.add_argument("--class-weighting", action="store_true", help="inverse-frequency sample weights")
    _train_args(p, "activity")

    p = sub.add_parser("train-depression", help="train the voice spectrogram CNN")
    p.add_argument("--data", type=_existing, required=True, help="audio corpus directory (cases.jsonl)")
    p.add_argument("--clip-seconds", type=_positive(float), default=3.0, help="clip length in seconds")
    _train_args(p, "depression")

    p = sub.add_parser("train-cognitive", help="train the pen-trajectory 3D CNN")
    p.add_argument("--data", type=_existing, required=True, help="stroke corpus directory (cases.jsonl)")
    p.add_argument("--dims", type=_dims, default=(16, 16, 16), help="voxel grid, e.g. 16,16,16")
    _train_args(p, "cognitive")

    p = sub.add_parser("eval", help="accuracy, per-class precision/recall and confusion matrix")
    p.add_argument("--model", type=_existing, required=True, help="model file")
    p.add_argument("--data", type=_existing, required=True, help="dataset matching the model's task")
    p.add_argument("--manifest", type=_existing, help="activity manifest (default: groups stored in the model)")
    p.add_argument("--csv", help="also write the report as CSV")

    p = sub.add_parser("spectrogram", help="log-magnitude spectrogram of a raw PCM file as CSV")
    p.add_argument("--in", dest="input", type=_existing, required=True, help="16-bit LE mono PCM")
    p.add_argument("--rate", type=_positive(int), default=44100, help="sample rate in Hz")
    p.add_argument("--fft-size", type=_positive(int), default=1024, help="frame length (power of two)")
    p.add_argument("--hop", type=_positive(int), default=512, help="frame hop in samples")
    p.add_argument("--floor-db", type=float, default=-80.0, help="lower clamp in dB")
    p.add_argument("--out", required=True, help="CSV file, one row per frame")

    p = sub.add_parser("voxelize", help="voxel grid of a pen-stroke file as sparse CSV")
    p.add_argument("--in", dest="input", type=_existing, required=True, help="pen-stroke file")
    p.add_argument("--dims", type=_dims, default=(16, 16, 16), help="voxel grid, e.g. 16,16,16")
    p.add_argument("--out", required=True, help="CSV file (channel,x,y,t,value per occupied voxel)")

    p = sub.add_parser("export-cloud", help="x,y,t_scaled,channel point cloud of a pen-stroke file")
    p.add_argument("--in", dest="input", type=_existing, required=True, help="pen-stroke file")
    p.add_argument("--out", required=True, help="CSV file, one row per pen point")

    p = sub.add_parser("serve", help="run the ingestion service until interrupted")
    p.add_argument("--config", type=_existing, help="JSON config file")
    p.add_argument("--port", type=int, help="override the configured port (0 = any free port)")
    p.add_argument("--data-dir", help="override the configured data directory")
    p.add_argument("--model", type=_existing, help="override the configured model path")

    p = sub.add_parser("replay", help="post a trace to a running service as 1-second packets")
    p.add_argument("--trace", type=_existing, required=True, help="activity JSONL trace")
    p.add_argument("--url", required=True, help="service base URL")
    p.add_argument("--patient", required=True, help="registered patient id")
    p.add_argument("--speed", type=_nonneg_float, default=1.0, help="packets per second; 0 = unthrottled")
    p.add_argument("--t0", type=int, help="timestamp (ms) of the first packet (default: now)")
    p.add_argument("--location", help="optional location tag attached to every packet")
    return parser


# --- commands ----------------------------------------------------------------

def cmd_synth(args, out):
    kinds = args.kind
    mod = sim.modality(kinds[0])
    single = len(kinds) == 1 and args.count == 1
    if args.inject_falls and (mod != "accel" or not single):
        raise UsageError("--inject-falls applies to a single accelerometer trace")
    rate = args.rate
    if mod == "accel":
        if single:
            spec = sim.TraceSpec(kinds[0], args.duration, rate, args.seed)
            _, samples = sim.synth_accel(spec)
            label = kinds[0]
            if args.inject_falls:
                try:
                    start, count = (int(v) for v in args.inject_falls.split(":"))
                except ValueError:
                    raise UsageError("--inject-falls expects START:COUNT, e.g. 30:3") from None
                samples = sim.inject_falls(samples, spec.rate, start, count, args.seed)
                label = "mixed"
            sim.write_jsonl([{"label": label, "rate_hz": spec.rate, "samples": samples.tolist()}], args.out)
            print(f"wrote {len(samples)} samples to {args.out}", file=out)
        else:
            counts = {k: args.count for k in kinds}
            recs = sim.activity_records(counts, args.seed, rate or sim.DEFAULT_RATES["accel"], args.duration)
            sim.write_jsonl(recs, args.out)
            manifest = args.manifest or args.out + ".manifest.json"
            with open(manifest, "w", encoding="utf-8") as fh:
                json.dump(sim.activity_manifest(kinds), fh, indent=2)
                fh.write("\n")
            print(f"wrote {len(recs)} windows to {args.out} (manifest {manifest})", file=out)
    elif mod == "audio":
        if single:
            audio = sim.synth_audio(sim.TraceSpec(kinds[0], args.duration, rate, args.seed))
            with open(args.out, "wb") as fh:
                fh.write(dsp.encode_pcm(audio))
            print(f"wrote {len(audio.samples)} PCM samples at {audio.sample_rate} Hz to {args.out}", file=out)
        else:
            cases = sim.audio_cases({k: args.count for k in kinds}, args.seed, args.duration,
                                    int(rate or sim.DEFAULT_RATES["audio"]))
            sim.write_audio_corpus(cases, args.out)
            print(f"wrote {len(cases)} audio cases to {args.out}", file=out)
    else:
        if single:
            strokes = sim.synth_strokes(sim.TraceSpec(kinds[0], args.duration, rate, args.seed))
            dsp.write_strokes(strokes, args.out)
            print(f"wrote {sum(len(s) for s in strokes)} pen points to {args.out}", file=out)
        else:
            cases = sim.stroke_cases({k: args.count for k in kinds}, args.seed, args.duration,
                                     rate or sim.DEFAULT_RATES["strokes"])
            sim.write_stroke_corpus(cases, args.out)
            print(f"wrote {len(cases)} stroke cases to {args.out}", file=out)


def _config(args):
    return TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, epochs=args.epochs,
                       seed=args.seed, validation_split=args.validation_split,
                       class_weighting=getattr(args, "class_weighting", False))


def _epoch_printer(args, out):
    began = time.monotonic()
    print(f"{'epoch':>5}  {'loss':>10}  {'accuracy':>8}", file=out)

    def show(rec):
        line = f"{rec['epoch']:>5}  {rec['loss']:>10.6f}  {rec['accuracy']:>8.4f}"
        if "val_accuracy" in rec:
            line += f"  val_loss {rec['val_loss']:.6f}  val_acc {rec['val_accuracy']:.4f}"
        if not args.deterministic:
            line += f"  ({time.monotonic() - began:.1f} s)"
        print(line, file=out, flush=True)
    return show


def cmd_train_activity(args, out):
    from .pipelines.activity import load_activity_jsonl, train_activity

    config = _config(args)
    data = load_activity_jsonl(args.data, args.manifest, args.rate, args.window_seconds)
    counts = ", ".join(f"{k}={v}" for k, v in data.counts().items())
    print(f"{len(data)} windows ({counts})", file=out)
    model = train_activity(data, config, args.arch, args.rate, args.window_seconds,
                           callback=_epoch_printer(args, out))
    save_model(model, args.out)
    print(f"saved model {model.meta['model_id']} ({model.n_params} parameters) to {args.out}", file=out)


def cmd_train_depression(args, out):
    from .pipelines.depression import load_audio_corpus, train_depression

    config = _config(args)
    cases = load_audio_corpus(args.data)
    print(f"{len(cases)} audio cases", file=out)
    model = train_depression(cases, config, args.clip_seconds, callback=_epoch_printer(args, out))
    save_model(model, args.out)
    print(f"saved model {model.meta['model_id']} ({model.n_params} parameters) to {args.out}", file=out)


def cmd_train_cognitive(args, out):
    from .pipelines.cognitive import load_stroke_corpus, train_cognitive

    config = _config(args)
    cases = load_stroke_corpus(args.data)
    print(f"{len(cases)} stroke cases", file=out)
    model = train_cognitive(cases, config, args.dims, callback=_epoch_printer(args, out))
    save_model(model, args.out)
    print(f"saved model {model.meta['model_id']} ({model.n_params} parameters) to {args.out}", file=out)


def evaluate_model(model, data_path, manifest_path=None):
    """Predict every example of ``data_path`` and return the classification report."""
    from .pipelines import activity, cognitive, depression
    from .pipelines.common import batched_proba
    from .pipelines.labels import Manifest, load_manifest
    from .pipelines.metrics import classification_report

    task = model.meta.get("task")
    names = model.label_names
    if task == "activity":
        if manifest_path:
            manifest = load_manifest(manifest_path)
        else:
            groups = model.meta["groups"]
            manifest = Manifest.from_dict({"labels": [{"name": n, "group": groups[n]} for n in names]})
        data = activity.load_activity_jsonl(data_path, manifest, model.meta["rate"], model.meta["window_seconds"])
        x = activity.dataset_tensors(data, model.meta["rate"], model.meta["window_seconds"])
        probs = batched_proba(model, activity.preprocess_windows(model, x))
        truth = data.labels
        labels = list(names) + [n for n in data.manifest.names if n not in names]
    elif task == "depression":
        truth, pred = [], []
        for case in depression.load_audio_corpus(data_path):
            for d in depression.classify_clips(model, case.audio):
                truth.append(case.label)
                pred.append(names[d.label])
        return classification_report(truth, pred, names)
    elif task == "cognitive":
        truth, pred = [], []
        for strokes, label in cognitive.load_stroke_corpus(data_path):
            truth.append(label)
            pred.append(cognitive.screen_cognitive(model, strokes).label)
        return classification_report(truth, pred, names)
    else:
        raise CareWatchError(f"model has unknown task {task!r}")
    pred = [names[i] for i in np.argmax(probs, axis=1)]
    return classification_report(truth, pred, labels)


def cmd_eval(args, out):
    from .pipelines.metrics import format_report, report_csv

    model = load_model(args.model)
    report = evaluate_model(model, args.data, args.manifest)
    print(format_report(report), file=out)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report_csv(report))


def cmd_spectrogram(args, out):
    with open(args.input, "rb") as fh:
        audio = dsp.decode_pcm(fh.read(), args.rate)
    spec = dsp.spectrogram(audio, args.fft_size, args.hop, args.floor_db)
    np.savetxt(args.out, spec.values, delimiter=",", fmt="%.10g")
    print(f"{spec.frame_count} frames x {spec.bin_count} bins written to {args.out}", file=out)


def cmd_voxelize(args, out):
    grid = dsp.voxelize(dsp.read_strokes(args.input), args.dims)
    nz = np.argwhere(grid > 0)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("channel,x,y,t,value\n")
        for c, i, j, k in nz:
            fh.write(f"{c},{i},{j},{k},{grid[c, i, j, k]:.17g}\n")
    print(f"{len(nz)} occupied voxels of {'x'.join(map(str, args.dims))} grid written to {args.out}", file=out)


def cmd_export_cloud(args, out):
    from .pipelines.cognitive import export_point_cloud

    n = export_point_cloud(dsp.read_strokes(args.input), args.out)
    print(f"{n} points written to {args.out}", file=out)


def cmd_serve(args, out):
    import signal
    from dataclasses import replace

    from .service import Service, load_config

    cfg = load_config(args.config)
    overrides = {k: v for k, v in (("port", args.port), ("data_dir", args.data_dir),
                                   ("model_path", args.model)) if v is not None}
    cfg = replace(cfg, **overrides)
    service = Service(cfg)
    print(f"carewatch serving on {service.url} (port {service.port})", file=out, flush=True)

    def _terminate(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _terminate)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()


def cmd_replay(args, out):
    report = sim.replay(args.trace, args.url, args.patient, args.speed, t0=args.t0, location=args.location)
    print(json.dumps(report.to_dict(), indent=2), file=out)
    if report.aborted:
        raise CareWatchError(f"replay aborted: {report.error}")


COMMANDS = {
    "synth": cmd_synth, "train-activity": cmd_train_activity, "train-depression": cmd_train_depression,
    "train-cognitive": cmd_train_cognitive, "eval": cmd_eval, "spectrogram": cmd_spectrogram,
    "voxelize": cmd_voxelize, "export-cloud": cmd_export_cloud, "serve": cmd_serve, "replay": cmd_replay,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        parser.exit(2, f"carewatch {args.command}: error: {exc}\n")
    except (CareWatchError, OSError, ValueError) as exc:
        print(f"carewatch {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
