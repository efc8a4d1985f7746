"""Command-line surface: extract, simulate, track, evaluate, oracle.

Exit codes: 0 success, 2 usage error, 3 data error, 4 real-time budget
violation (``track --strict``). A key=value config file can pre-set any
flag of any subcommand; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .evaluate import evaluate
from .features import (
    FeatureFileError,
    MfccExtractor,
    downsample_lr,
    extract_mfcc,
    load_features,
    load_wav,
    save_features,
)
from .integrator import Integrator, TrackerConfig, read_reports
from .score import AnnotationError, load_annotations, load_reference
from .simulate import (
    SimParams,
    apply_script,
    generate_script,
    load_truth,
    save_truth,
    script_to_json,
)

log = logging.getLogger("scorefollow")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_BUDGET = 4

HR_BUDGET_S = 0.010
LR_BUDGET_S = 0.300


class BudgetError(RuntimeError):
    pass


def _load_config_file(path: str) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FeatureFileError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


# ---------------------------------------------------------------------- cmds

def cmd_extract(args) -> int:
    samples, rate = load_wav(args.audio)
    features = extract_mfcc(samples, rate)
    save_features(args.out, features)
    print(f"wrote {features.frame_count} HR frames x {features.dims} to {args.out}")
    if args.lr:
        lr_path = args.lr_out or (str(args.out) + ".lr")
        lr = downsample_lr(features)
        save_features(lr_path, lr)
        print(f"wrote {lr.frame_count} LR frames to {lr_path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    hr = load_features(args.ref_features)
    parts, bars = load_annotations(args.annotations)
    if parts.ends[-1] >= hr.frame_count:
        raise AnnotationError(
            f"{args.annotations}: annotations exceed feature range {hr.frame_count}"
        )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = SimParams(n_inserts=args.inserts)
    for v in range(args.versions):
        script = generate_script(parts, seed=args.seed + v, params=params)
        modified, truth = apply_script(hr, parts, bars, script)
        vdir = out_dir / f"version_{v:02d}"
        vdir.mkdir(exist_ok=True)
        save_features(vdir / "features.f32", modified)
        (vdir / "script.json").write_text(script_to_json(script) + "\n", encoding="utf-8")
        save_truth(vdir / "truth.csv", truth)
        print(f"{vdir}: {modified.frame_count} frames, removal ratio {script.removal_ratio:.3f}")
    return EXIT_OK


def _reference_from_dir(ref_dir: str):
    ref_dir = Path(ref_dir)
    features = ref_dir / "features.f32"
    annotations = ref_dir / "annotations.csv"
    lr = ref_dir / "features_lr.f32"
    return load_reference(features, annotations, lr if lr.exists() else None)


def _target_frames(args):
    if args.live:
        return _live_frames(args)
    path = Path(args.target)
    if path.suffix.lower() == ".wav":
        samples, rate = load_wav(path)
        return iter(extract_mfcc(samples, rate).data)
    return iter(load_features(path).data)


def _live_frames(args):
    extractor = MfccExtractor(args.live_rate)
    stream = sys.stdin.buffer
    chunk_samples = max(1, int(args.live_rate * 0.05))
    while True:
        raw = stream.read(chunk_samples * 4)
        if not raw:
            break
        yield from extractor.feed(np.frombuffer(raw, dtype="<f4"))
    yield from extractor.finalize()


def cmd_track(args) -> int:
    ref = _reference_from_dir(args.ref_dir)
    config = TrackerConfig(model=args.model, window=args.c, start=args.start)
    integ = Integrator(ref, config)
    dims = ref.hr.dims
    hr_times: list[float] = []
    lr_times: list[float] = []
    count = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for i, frame in enumerate(_target_frames(args)):
            y = np.asarray(frame, dtype=np.float64)
            if y.ndim != 1 or y.shape[0] != dims or not np.all(np.isfinite(y)):
                log.warning("skipping malformed target frame %d", i)
                continue
            pushes_before = integ.lr_pushes
            t0 = time.perf_counter()
            report = integ.step(y)
            elapsed = time.perf_counter() - t0
            (lr_times if integ.lr_pushes > pushes_before else hr_times).append(elapsed)
            fh.write(json.dumps(report.to_record(), sort_keys=True))
            fh.write("\n")
            count += 1
    print(f"wrote {count} reports to {args.out}")
    if args.strict and count:
        hr_mean = float(np.mean(hr_times)) if hr_times else 0.0
        lr_mean = float(np.mean(lr_times)) if lr_times else 0.0
        print(f"mean step: {hr_mean * 1e3:.3f} ms (HR), {lr_mean * 1e3:.3f} ms (HR+LR)")
        if hr_mean >= HR_BUDGET_S or lr_mean >= LR_BUDGET_S:
            raise BudgetError(
                f"real-time budget breached: HR {hr_mean * 1e3:.1f} ms "
                f"(limit {HR_BUDGET_S * 1e3:.0f}), LR {lr_mean * 1e3:.1f} ms "
                f"(limit {LR_BUDGET_S * 1e3:.0f})"
            )
    return EXIT_OK


def _print_table(rows):
    header = f"{'model':<14} {'part':>7} {'bar':>7} {'@5bars':>7} {'frames':>9}"
    print(header)
    print("-" * len(header))
    for name, res in rows:
        print(
            f"{name:<14} {res.part_acc:>6.1f}% {res.bar_acc:>6.1f}% "
            f"{res.at5_acc:>6.1f}% {res.frames:>9d}"
        )


def cmd_evaluate(args) -> int:
    parts, bars = load_annotations(args.annotations)
    if args.aggregate:
        root = Path(args.aggregate)
        version_dirs = sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("version_"))
        if not version_dirs:
            raise FeatureFileError(f"{root}: no version_* directories")
        per_version = []
        weighted = np.zeros(3)
        frames = 0
        for vdir in version_dirs:
            reports = read_reports(vdir / "reports.jsonl")
            truth = load_truth(vdir / "truth.csv")
            res = evaluate(reports, truth, parts, bars)
            per_version.append({"version": vdir.name, **res.to_dict()})
            weighted += np.array([res.part_acc, res.bar_acc, res.at5_acc]) * res.frames
            frames += res.frames
        agg = weighted / max(frames, 1)
        result = {
            "model": args.model,
            "part_acc": float(agg[0]),
            "bar_acc": float(agg[1]),
            "at5_acc": float(agg[2]),
            "frames": frames,
            "versions": per_version,
        }
        print(
            f"{args.model}: part {result['part_acc']:.1f}% bar {result['bar_acc']:.1f}% "
            f"@5 {result['at5_acc']:.1f}% over {frames} frames, {len(per_version)} versions"
        )
    else:
        reports = read_reports(args.reports)
        truth = load_truth(args.truth)
        res = evaluate(reports, truth, parts, bars)
        _print_table([(args.model, res)])
        result = res.to_dict(model=args.model)
    if args.out:
        Path(args.out).write_text(json.dumps(result, sort_keys=True) + "\n", encoding="utf-8")
        print(f"metrics written to {args.out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .evaluate import offline_dtw

    ref = load_features(args.ref_features)
    target = load_features(args.target_features)
    parts = None
    if args.jumps:
        parts, _ = load_annotations(args.jumps)
    result = offline_dtw(ref.data, target.data, parts=parts, cell_cap=args.cap)
    payload = {
        "cost": result.cost,
        "positions": [int(p) for p in result.positions],
        "path_len": len(result.path),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
        print(f"oracle alignment written to {args.out}")
    else:
        print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scorefollow", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="key=value file pre-setting any flag; flags win")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="WAV to HR (and optionally LR) feature files")
    p.add_argument("audio")
    p.add_argument("out")
    p.add_argument("--lr", action="store_true", help="also write the LR feature file")
    p.add_argument("--lr-out", default=None)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("simulate", help="build structurally modified target versions")
    p.add_argument("ref_features")
    p.add_argument("annotations")
    p.add_argument("out_dir")
    p.add_argument("--versions", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inserts", type=int, default=0, help="interlude segments per version")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run a tracking session over a target")
    p.add_argument("ref_dir", help="directory with features.f32 + annotations.csv")
    p.add_argument("target", nargs="?", help="target feature file or WAV")
    p.add_argument("--live", action="store_true", help="read float32 PCM from stdin")
    p.add_argument("--live-rate", type=int, default=22050)
    p.add_argument("--model", default="joltw+lr",
                   choices=["baseline", "joltw", "baseline+lr", "joltw+lr"])
    p.add_argument("--c", type=int, default=4000, help="HR window size in frames")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--out", default="reports.jsonl")
    p.add_argument("--strict", action="store_true",
                   help="exit 4 if the real-time budget is breached")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="score report streams against ground truth")
    p.add_argument("reports", nargs="?")
    p.add_argument("truth", nargs="?")
    p.add_argument("annotations")
    p.add_argument("--aggregate", help="directory of version_*/ dirs with reports.jsonl + truth.csv")
    p.add_argument("--model", default="joltw+lr", help="label for the output")
    p.add_argument("--out", help="write metrics JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle", help="offline optimal alignment (desk scale)")
    p.add_argument("ref_features")
    p.add_argument("target_features")
    p.add_argument("--jumps", help="annotation CSV enabling part jump links")
    p.add_argument("--cap", type=int, default=400_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.config:
        try:
            overrides = _load_config_file(args.config)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        defaults = vars(args)
        explicit = set()
        if argv is None:
            argv = sys.argv[1:]
        for token in argv:
            if token.startswith("--"):
                explicit.add(token.lstrip("-").split("=")[0].replace("-", "_"))
        for key, value in overrides.items():
            if key in defaults and key not in explicit and defaults[key] is not None:
                defaults[key] = _coerce(value, defaults[key])
            elif key in defaults and key not in explicit:
                defaults[key] = value
    if args.command == "track" and not args.live and not args.target:
        parser.error("track needs a target file or --live")
    if args.command == "evaluate" and not args.aggregate and not (args.reports and args.truth):
        parser.error("evaluate needs reports and truth, or --aggregate")
    try:
        return args.func(args)
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (AnnotationError, FeatureFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
