"""Command-line front end: ``spectra {enhance,batch,spectrum,train-toy,metrics}``.

Exit codes: 0 success, 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .cnn import MicroCnn, TrainConfig, train, write_trace
from .dft import log_magnitude_image
from .enhance import FILTER_KINDS, EnhanceConfig, enhance, parse_bool
from .errors import SpectraError
from .image_io import load_grayscale, save_grayscale, scan_dataset
from .metrics import PredictionRecord, compute_report, read_predictions, write_predictions, write_report

log = logging.getLogger("spectra")

# argparse dests, identical to the EnhanceConfig field names
_ENHANCE_FLAGS = ("filter", "cutoff", "order", "alpha", "pre_smooth", "brightness", "contrast", "equalize")


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: list[str]
    outputs: list[str]
    seed: int
    version: str = __version__
    duration_s: float = 0.0
    succeeded: int = 0
    failed: int = 0
    failures: list[dict] = field(default_factory=list)

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")


def _bool_arg(text: str) -> bool:
    try:
        return parse_bool(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_enhance_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("enhancement")
    g.add_argument("--config", type=Path, help="key = value file; explicit flags override it")
    g.add_argument("--filter", choices=FILTER_KINDS)
    g.add_argument("--cutoff", type=float)
    g.add_argument("--order", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--pre-smooth", dest="pre_smooth", type=float)
    g.add_argument("--brightness", type=float)
    g.add_argument("--contrast", type=float)
    g.add_argument("--equalize", type=_bool_arg, metavar="BOOL")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)


def _enhance_config(args) -> EnhanceConfig:
    cfg = EnhanceConfig.load(args.config) if getattr(args, "config", None) else EnhanceConfig()
    overrides = {dest: getattr(args, dest) for dest in _ENHANCE_FLAGS if getattr(args, dest, None) is not None}
    return EnhanceConfig(**{**asdict(cfg), **overrides})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectra", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="enhance a single image")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    _add_enhance_flags(p)
    _add_common(p)

    p = sub.add_parser("batch", help="enhance every image of a dataset tree")
    p.add_argument("dataset", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--manifest", type=Path, help="run manifest path (default: <output>.run.json)")
    _add_enhance_flags(p)
    _add_common(p)

    p = sub.add_parser("spectrum", help="write the centered log-magnitude spectrum")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)

    p = sub.add_parser("train-toy", help="train the micro CNN on a dataset tree")
    p.add_argument("dataset", type=Path)
    p.add_argument("--out", type=Path, required=True, help="directory for model, trace and predictions")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=8)
    p.add_argument("--size", type=int, default=32, help="square input size after bilinear resize")
    p.add_argument("--channels", type=int, nargs=2, default=(4, 8))
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--enhance", dest="pre_enhance", type=_bool_arg, default=False, metavar="BOOL",
                   help="run the enhancement pipeline on every image first")
    _add_enhance_flags(p)
    _add_common(p)

    p = sub.add_parser("metrics", help="score a prediction CSV")
    p.add_argument("predictions", type=Path)
    p.add_argument("report", type=Path)
    return parser


# ---------------------------------------------------------------------------
# commands


def cmd_enhance(args) -> int:
    cfg = _enhance_config(args)
    save_grayscale(enhance(load_grayscale(args.input), cfg), args.output)
    log.info("wrote %s", args.output)
    return 0


def _splits(root: Path):
    names = {c.name.lower() for c in root.iterdir() if c.is_dir()}
    present = [s for s in ("train", "test") if s in names]
    if present:
        return [scan_dataset(root, s) for s in present]
    return [scan_dataset(root, "train")]


def cmd_batch(args) -> int:
    cfg = _enhance_config(args)
    if args.jobs < 1:
        raise SpectraError("--jobs must be at least 1")
    start = time.perf_counter()
    root = args.dataset
    manifests = _splits(root)

    tasks = []
    failures = []
    for m in manifests:
        for path, _ in m.entries:
            tasks.append((path, args.output / path.relative_to(root).with_suffix(".png")))
        for p in m.rejected:
            log.warning("skipping %s: decode failure at scan time", p)
            failures.append({"path": p.as_posix(), "error": "decode failure at scan time"})

    def run(task):
        src, dst = task
        try:
            save_grayscale(enhance(load_grayscale(src), cfg), dst)
            return None
        except (SpectraError, OSError, ValueError) as exc:
            log.warning("skipping %s: %s", src, exc)
            return {"path": src.as_posix(), "error": str(exc)}

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(run, tasks))
    failures += [r for r in results if r is not None]
    succeeded = sum(r is None for r in results)

    manifest = RunManifest(
        command="batch",
        config={**asdict(cfg), "jobs": args.jobs},
        inputs=[root.as_posix()],
        outputs=[args.output.as_posix()],
        seed=args.seed,
        duration_s=time.perf_counter() - start,
        succeeded=succeeded,
        failed=len(failures),
        failures=sorted(failures, key=lambda f: f["path"]),
    )
    manifest.write(args.manifest or args.output.with_name(args.output.name + ".run.json"))
    log.info("batch: %d enhanced, %d failed", succeeded, len(failures))
    if succeeded == 0:
        log.error("no image was enhanced")
        return 1
    return 0


def cmd_spectrum(args) -> int:
    save_grayscale(log_magnitude_image(load_grayscale(args.input)), args.output)
    return 0


def _resize(img, size: int) -> np.ndarray:
    pil = Image.fromarray(img.data.astype(np.float32), mode="F")
    return np.asarray(pil.resize((size, size), Image.Resampling.BILINEAR), dtype=np.float64)


def _load_split(manifest, size: int, cfg: EnhanceConfig | None):
    items = []
    for path, label in manifest.entries:
        img = load_grayscale(path)
        if cfg is not None:
            img = enhance(img, cfg)
        items.append((path, _resize(img, size)[None], int(label)))
    return items


def cmd_train_toy(args) -> int:
    start = time.perf_counter()
    root = args.dataset
    split_dirs = {c.name.lower() for c in root.iterdir() if c.is_dir()} if root.is_dir() else set()
    for split in ("train", "test"):
        if split not in split_dirs:
            raise SpectraError(f"{root}: missing {split!r} split directory")
    cfg = _enhance_config(args) if args.pre_enhance else None
    train_items = _load_split(scan_dataset(root, "train"), args.size, cfg)
    test_manifest = scan_dataset(root, "test")
    test_items = _load_split(test_manifest, args.size, cfg)

    net = MicroCnn((1, args.size, args.size), channels=tuple(args.channels), dropout=args.dropout, seed=args.seed)
    tcfg = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    net, trace = train(net, [(x, y) for _, x, y in train_items], tcfg)

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    net.save(out / "model.txt")
    write_trace(trace, out / "trace.csv")
    probs = net.predict_proba(np.stack([x for _, x, _ in test_items]))
    records = [
        PredictionRecord(
            path.relative_to(test_manifest.root).as_posix(), y, int(np.argmax(p)), tuple(float(v) for v in p)
        )
        for (path, _, y), p in zip(test_items, probs)
    ]
    write_predictions(records, out / "predictions.csv")
    if trace:
        log.info("final train accuracy %.4f, loss %.4f", trace[-1].accuracy, trace[-1].loss)

    RunManifest(
        command="train-toy",
        config={**asdict(tcfg), "size": args.size, "channels": list(args.channels), "dropout": args.dropout,
                "enhance": asdict(cfg) if cfg else None},
        inputs=[root.as_posix()],
        outputs=[(out / n).as_posix() for n in ("model.txt", "trace.csv", "predictions.csv")],
        seed=args.seed,
        duration_s=time.perf_counter() - start,
        succeeded=len(train_items) + len(test_items),
    ).write(out / "run_manifest.json")
    return 0


def cmd_metrics(args) -> int:
    report = compute_report(read_predictions(args.predictions))
    write_report(report, args.report)
    log.info("accuracy %.6f balanced %.6f mcc %.6f", report.accuracy, report.balanced_accuracy, report.mcc)
    return 0


COMMANDS = {
    "enhance": cmd_enhance,
    "batch": cmd_batch,
    "spectrum": cmd_spectrum,
    "train-toy": cmd_train_toy,
    "metrics": cmd_metrics,
}


def _configure_logging() -> None:
    level = os.environ.get("SPECTRA_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (SpectraError, OSError, ValueError) as exc:
        log.error("%s", exc)
        print(f"spectra {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
