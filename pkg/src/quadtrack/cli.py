"""Command-line entry point: ``quadtrack <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import formats
from .config import RunConfig, format_config, load_config
from .errors import DataError, QuadtrackError, TrainingDiverged, UsageError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> RunConfig:
    return load_config(args.config) if getattr(args, "config", None) else RunConfig()


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


# --------------------------------------------------------------------------
# commands


def cmd_track(args) -> int:
    from .pipeline import descriptor_records, frame_records, run_tracking, timing_summary, trajectory_records

    cfg = _config(args)
    records = formats.read_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = run_tracking(cfg, records, args.threads)
    formats.write_jsonl(out / "trajectories.jsonl", trajectory_records(outputs))
    formats.write_jsonl(out / "detections.jsonl", frame_records(outputs))
    if args.dump_descriptors:
        formats.write_jsonl(out / "descriptors.jsonl", descriptor_records(outputs))
    timing = timing_summary(outputs)
    if args.timing:
        _write_json(args.timing, timing)
    tracks = len({c.track_id for o in outputs for c in o.confirmed})
    print(f"{timing['frames']} frames, {tracks} trajectories, {timing['total_ms']:.2f} ms/frame "
          f"({timing['fps']:.2f} fps)", file=sys.stderr)
    return EXIT_OK


def _read_quads_by_frame(path) -> dict:
    """Any JSONL whose records carry ``frame`` and ``quad`` (detections, trajectories, GT)."""
    out: dict = {}
    for n, r in formats.read_jsonl(path):
        where = f"{path}:{n}"
        f = formats._field(r, "frame", where, int)
        if "detections" in r:  # per-frame D_t records
            for k, d in enumerate(r["detections"]):
                out.setdefault(f, []).append(formats._quad(d, f"{where}[{k}]"))
        else:
            out.setdefault(f, []).append(formats._quad(r, where))
    return out


def cmd_eval_det(args) -> int:
    from .metrics import detection_prf

    gt = formats.gt_frames(formats.read_gt(args.gt))
    prf = detection_prf(gt, _read_quads_by_frame(args.hyp), args.iou)
    report = asdict(prf)
    print(f"P {prf.precision:.4f}  R {prf.recall:.4f}  F {prf.f_measure:.4f}  "
          f"TP {prf.tp}  FP {prf.fp}  FN {prf.fn}")
    if args.out:
        _write_json(args.out, report)
    return EXIT_OK


def cmd_eval_mot(args) -> int:
    from .metrics import mot_metrics

    gt = formats.read_gt(args.gt)
    rep = mot_metrics(gt, formats.read_trajectories(args.hyp), args.iou)
    print(rep.summary())
    if args.out:
        _write_json(args.out, rep.as_dict())
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthlab import ScenarioConfig, crossing_scenario, generate_sequence, write_sequence

    kw = dict(frames=args.frames, width=args.size, height=args.size, instances=args.instances,
              occlusion_rate=args.occlusion_rate, dropout=args.dropout, seed=args.seed)
    if args.motion == "crossing":
        kw.pop("instances")
        cfg = crossing_scenario(**kw)
    else:
        cfg = ScenarioConfig(motion=args.motion, **kw)
    paths = write_sequence(generate_sequence(cfg), args.out)
    print(f"wrote {cfg.frames} frames to {paths['manifest']} and ground truth to {paths['gt']}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import format_table, run_suite

    results = run_suite(seed=args.seed, instances=args.instances, perturb=args.perturb)
    table = format_table(results)
    print(table)
    if args.out:
        Path(args.out).write_text(table + "\n")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_bench(args) -> int:
    import tempfile

    from .bench import bench_report, format_report

    cfg = _config(args)
    if args.manifest:
        report = bench_report(cfg, formats.read_manifest(args.manifest), args.threads or 1)
    else:
        from .synthlab import ScenarioConfig, generate_sequence, write_sequence

        # 512x512 frames at stride 4 give 128x128 maps
        seq = generate_sequence(ScenarioConfig(frames=args.frames, instances=4, seed=args.seed))
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_sequence(seq, tmp)
            report = bench_report(cfg, formats.read_manifest(paths["manifest"]), args.threads or 1)
    print(format_report(report))
    if args.out:
        _write_json(args.out, report)
    return EXIT_OK


def cmd_train(args) -> int:
    from .synthlab import ScenarioConfig, TrainConfig, toy_train

    tcfg = TrainConfig(steps=args.steps, lr=args.lr, matching=args.matching, descriptor=args.descriptor,
                       seed=args.seed, scenario=ScenarioConfig(render=False, distractors=8, seed=args.seed))
    try:
        emb, gru, rep = toy_train(tcfg)
    except TrainingDiverged as e:
        print(f"training diverged: {e}", file=sys.stderr)
        if e.diagnostics:
            print(json.dumps(e.diagnostics, sort_keys=True), file=sys.stderr)
        return EXIT_CHECK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emb.save(out / "embed")
    if gru is not None:
        gru.save(out / "gru")
    _write_json(out / "report.json", {"loss_curve": rep.loss_curve, "accuracy": rep.accuracy,
                                      "accuracy_curve": rep.accuracy_curve, "steps_run": rep.steps_run,
                                      "initial_accuracy": rep.initial_accuracy})
    print(f"{rep.steps_run} steps, probe loss {rep.loss_curve[0][1]:.4f} -> {rep.loss_curve[-1][1]:.4f}, "
          f"held-out association accuracy {rep.initial_accuracy:.3f} -> {rep.accuracy:.3f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="quadtrack", description="Quadrangle text tracking: detection decoding, "
                "descriptor matching, evaluation and synthetic benchmarks.")
    p.add_argument("--print-config", action="store_true",
                   help="print the effective configuration (defaults, or --config) and exit")
    p.add_argument("--config", help="run configuration file (for --print-config)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("track", help="run the tracker over a frame manifest")
    s.add_argument("--config")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--dump-descriptors", action="store_true", help="also write descriptors.jsonl")
    s.add_argument("--timing", help="write per-stage timing JSON here (never into --out)")
    s.add_argument("--threads", type=int, help="worker threads (default: $QUADTRACK_THREADS or 1)")
    s.set_defaults(func=cmd_track)

    for name, func, hyp_help in (("eval-det", cmd_eval_det, "detections, D_t or trajectory JSONL"),
                                 ("eval-mot", cmd_eval_mot, "trajectory JSONL")):
        s = sub.add_parser(name, help=f"evaluate {hyp_help} against ground truth")
        s.add_argument("--gt", required=True)
        s.add_argument("--hyp", required=True, help=hyp_help)
        s.add_argument("--iou", type=float, default=0.5)
        s.add_argument("--out", help="write the report as JSON")
        s.set_defaults(func=func)

    s = sub.add_parser("synth", help="write a synthetic sequence in the harness formats")
    s.add_argument("--out", required=True)
    s.add_argument("--motion", choices=("static", "linear", "crossing"), default="linear")
    s.add_argument("--frames", type=int, default=24)
    s.add_argument("--instances", type=int, default=2)
    s.add_argument("--size", type=int, default=512, help="frame width and height in pixels")
    s.add_argument("--occlusion-rate", type=float, default=0.0)
    s.add_argument("--dropout", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op and loss")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--instances", type=int, default=20)
    s.add_argument("--perturb", type=float, default=0.0,
                   help="add this to every analytic gradient (negative control)")
    s.add_argument("--out", help="write the table here")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("bench", help="association micro-benchmark and per-stage pipeline timing")
    s.add_argument("--config")
    s.add_argument("--manifest", help="sequence to time (default: a synthetic 128x128-map sequence)")
    s.add_argument("--frames", type=int, default=48)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int)
    s.add_argument("--out", help="write the report as JSON")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("train", help="toy SGD training of the geometry embedding and GRU")
    s.add_argument("--out", required=True, help="directory for parameters and report")
    s.add_argument("--steps", type=int, default=2000)
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--matching", choices=("eagd", "agd"), default="eagd")
    s.add_argument("--descriptor", choices=("agd", "geometry", "appearance"), default="agd")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.print_config:
            sys.stdout.write(format_config(_config(args)))
            return EXIT_OK
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as e:
        print(f"quadtrack: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"quadtrack: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except QuadtrackError as e:
        print(f"quadtrack: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
