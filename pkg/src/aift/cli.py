"""Command-line surface: synth, train, transform, detect, eval, ablation.

Every command takes an optional ``--config`` file of ``key = value`` lines
(``#`` starts a comment); explicit flags override file values and unknown
keys are rejected.  The seed resolution order is flag, config file, the
``AIFT_SEED`` environment variable, then 0.

Every command writes an ``effective-config.txt`` echo (with a tool-version
line) into its output directory and refuses to share that directory with a
concurrently running command via a lock file.  All numerical outputs are
deterministic for a fixed seed: floats are serialized with ``repr`` so
reruns produce byte-identical CSVs.

Exit codes: 0 success, 2 configuration error, 3 input error, 4 integrity
error, 1 any other failure.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import Tensor, no_grad
from .data import (DatasetManifest, SynthConfig, extract_patches, load_image,
                   normalize_patch, read_pgm, synth_corpus, write_pgm)
from .detection import DETECT_MODES, detect, detect_full_image
from .errors import (AiftError, ConfigurationError, InputError, IntegrityError)
from .metrics import evaluate
from .model import (F2I, I2F, PATCH_SIZES, generate, load_checkpoint,
                    save_checkpoint)
from .spectral import spectrum_image
from .training import LOSS_MODES, TrainConfig, train

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_INTEGRITY = 4

_LOCK_NAME = ".aift-lock"
_CONFIG_KEY_ALIASES = {"lambda": "lam"}
_DEST_TO_KEY = {"lam": "lambda"}

# Required settings are validated after the config-file merge (not by
# argparse) so that a config file can supply them too.
_REQUIRED = {
    "synth": ("normal", "defect"),
    "train": ("data",),
    "transform": ("ckpt", "image"),
    "detect": ("ckpt",),
    "eval": (),
    "ablation": ("data", "seeds"),
}


def _ft(x: float) -> str:
    """Serialize a float so that reruns are byte-identical and parsing is exact."""
    return repr(float(x))


# -- argument handling --------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="FILE",
                     help="key = value defaults file; flags override it")
    sub.add_argument("--seed", type=int, default=None,
                     help="RNG seed (default: $AIFT_SEED, else 0)")
    sub.add_argument("--out", help="output directory (required)")


def _add_train_knobs(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--epochs", type=int, default=50)
    sub.add_argument("--batch", type=int, default=64)
    sub.add_argument("--lambda", dest="lam", type=float, default=0.1,
                     help="reconstruction weight in the total loss")
    sub.add_argument("--critic-iters", type=int, default=10,
                     help="discriminator updates per generator update")
    sub.add_argument("--lr", type=float, default=2e-4)
    sub.add_argument("--beta1", type=float, default=0.5)
    sub.add_argument("--beta2", type=float, default=0.999)
    sub.add_argument("--base-channels", type=int, default=32,
                     help="channel width of the first conv stage")
    sub.add_argument("--patch-size", type=int, default=0,
                     help="0 infers the size from the first training image")


def _build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="aift",
        description="Adversarial image-to-frequency transform for road-defect detection")
    parser.add_argument("--version", action="version", version=f"aift {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, argparse.ArgumentParser] = {}

    s = subs["synth"] = subparsers.add_parser(
        "synth", help="generate the synthetic pavement corpus")
    s.add_argument("--normal", type=int,
                   help="number of normal training patches")
    s.add_argument("--defect", type=int,
                   help="number of defect test patches (matched by as many normal test patches)")
    s.add_argument("--patch-size", type=int, default=32)
    s.add_argument("--force", action="store_true",
                   help="overwrite a non-empty output directory")
    _add_common(s)

    s = subs["train"] = subparsers.add_parser("train", help="train a model on a corpus")
    s.add_argument("--data", help="corpus directory with manifest.csv")
    s.add_argument("--loss", choices=LOSS_MODES, default="total")
    _add_train_knobs(s)
    s.add_argument("--ckpt-every", type=int, default=0,
                   help="write a checkpoint every K epochs (0: final only)")
    _add_common(s)

    s = subs["transform"] = subparsers.add_parser(
        "transform", help="write the four transform panels for one patch")
    s.add_argument("--ckpt")
    s.add_argument("--image")
    _add_common(s)

    s = subs["detect"] = subparsers.add_parser(
        "detect", help="score images against a trained model")
    s.add_argument("--ckpt")
    s.add_argument("--data", help="corpus directory (scores its test split)")
    s.add_argument("--image", help="single image file")
    s.add_argument("--mode", choices=DETECT_MODES, default="fourier")
    s.add_argument("--threshold", type=float, default=0.0)
    s.add_argument("--stride", type=int, default=0,
                   help="patch stride for images larger than the patch size (0: patch size)")
    _add_common(s)

    s = subs["eval"] = subparsers.add_parser(
        "eval", help="compute AIU/ODS/OIS/AUROC reports")
    s.add_argument("--scores", help="scores.csv from the detect command (for AUROC)")
    s.add_argument("--maps", help="directory of score-map CSVs (for AIU/ODS/OIS)")
    s.add_argument("--gt", help="directory of ground-truth mask PGMs")
    s.add_argument("--tolerance", type=float, default=0.0,
                   help="pixel distance tolerance for F-measure matching")
    _add_common(s)

    s = subs["ablation"] = subparsers.add_parser(
        "ablation", help="train and evaluate the loss-mode ablation grid")
    s.add_argument("--data")
    s.add_argument("--seeds", help="comma-separated seeds, e.g. 0,1,2")
    s.add_argument("--loss-modes", default=",".join(LOSS_MODES),
                   help="comma-separated subset of re,gan,total")
    _add_train_knobs(s)
    s.add_argument("--threshold", type=float, default=0.0)
    _add_common(s)

    return parser, subs


def _load_config_file(path: str) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file {path} not found")
    values: dict[str, str] = {}
    for line_no, line in enumerate(p.read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{path}:{line_no}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip().replace("-", "_")
        key = _CONFIG_KEY_ALIASES.get(key, key)
        values[key] = value.strip()
    return values


def _coerce(action: argparse.Action, raw: str, key: str):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"config key '{key}' expects a boolean, got {raw!r}")
    try:
        value = action.type(raw) if action.type else raw
    except (TypeError, ValueError):
        raise ConfigurationError(f"config key '{key}' has invalid value {raw!r}")
    if action.choices is not None and value not in action.choices:
        raise ConfigurationError(
            f"config key '{key}' must be one of {sorted(action.choices)}, got {raw!r}")
    return value


def _parse_args(argv: list[str]) -> argparse.Namespace:
    parser, subs = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = subs[args.command]
        actions = {a.dest: a for a in sub._actions
                   if a.dest not in ("help", "config", "command")}
        overrides = {}
        for key, raw in _load_config_file(args.config).items():
            if key not in actions:
                raise ConfigurationError(
                    f"unknown config key '{_DEST_TO_KEY.get(key, key)}' for command {args.command}")
            overrides[key] = _coerce(actions[key], raw, _DEST_TO_KEY.get(key, key))
        sub.set_defaults(**overrides)
        args = parser.parse_args(argv)
    missing = [key for key in (*_REQUIRED[args.command], "out")
               if getattr(args, key, None) is None]
    if missing:
        shown = ", ".join("--" + _DEST_TO_KEY.get(k, k).replace("_", "-")
                          for k in missing)
        raise ConfigurationError(f"missing required settings for {args.command}: {shown}")
    return args


def _resolve_seed(args: argparse.Namespace) -> int:
    seed = getattr(args, "seed", None)
    if seed is None:
        env = os.environ.get("AIFT_SEED")
        if env is not None:
            try:
                seed = int(env)
            except ValueError:
                raise ConfigurationError(f"AIFT_SEED must be an integer, got {env!r}")
        else:
            seed = 0
    if seed < 0:
        raise ConfigurationError(f"seed must be non-negative, got {seed}")
    return seed


# -- output directory protocol ---------------------------------------------------


class _RunDir:
    """Creates the output directory, takes its lock and writes the config echo."""

    def __init__(self, args: argparse.Namespace):
        self.path = Path(args.out)
        self.args = args
        self.lock = self.path / _LOCK_NAME

    def __enter__(self) -> Path:
        self.path.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise IntegrityError(
                f"output directory {self.path} is in use by another run "
                f"(remove {_LOCK_NAME} if that run is gone)")
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        lines = [f"# aift {__version__}", f"command = {self.args.command}"]
        for key in sorted(vars(self.args)):
            if key in ("command", "config"):
                continue
            shown = _DEST_TO_KEY.get(key, key).replace("_", "-")
            lines.append(f"{shown} = {getattr(self.args, key)}")
        (self.path / "effective-config.txt").write_text("\n".join(lines) + "\n")
        return self.path

    def __exit__(self, *exc) -> None:
        self.lock.unlink(missing_ok=True)


# -- shared data plumbing ---------------------------------------------------------


def _infer_patch_size(image: np.ndarray, flag_value: int) -> int:
    if flag_value:
        if flag_value not in PATCH_SIZES:
            raise ConfigurationError(
                f"patch-size must be one of {PATCH_SIZES}, got {flag_value}")
        return flag_value
    h, w = image.shape
    if h == w and h in PATCH_SIZES:
        return h
    raise ConfigurationError(
        f"cannot infer a patch size from a {h}x{w} image; pass --patch-size")


def _normalized_patches(image: np.ndarray, patch: int) -> list[np.ndarray]:
    if image.shape == (patch, patch):
        return [normalize_patch(image)]
    return [normalize_patch(p) for _, _, p in extract_patches(image, patch, patch)]


def _load_training_arrays(manifest: DatasetManifest, patch_flag: int):
    entries = manifest.train_entries()
    if not entries:
        raise InputError(f"manifest under {manifest.root} has no training entries")
    first = load_image(manifest.image_path(entries[0]))
    patch = _infer_patch_size(first, patch_flag)
    patches: list[np.ndarray] = []
    for entry in entries:
        patches.extend(_normalized_patches(load_image(manifest.image_path(entry)), patch))
    images = np.stack(patches)[:, None, :, :]
    freqs = np.stack([spectrum_image(p) for p in patches])[:, None, :, :]
    return images, freqs, patch


def _train_config(args: argparse.Namespace, loss_mode: str, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch, lam=args.lam,
        critic_iters=args.critic_iters, lr=args.lr, beta1=args.beta1,
        beta2=args.beta2, loss_mode=loss_mode, seed=seed,
        base_channels=args.base_channels,
    ).validate()


def _detect_one(params, image: np.ndarray, threshold: float, mode: str, stride: int):
    if image.shape == (params.patch_size, params.patch_size):
        return detect(params, normalize_patch(image), threshold=threshold, mode=mode)
    return detect_full_image(params, image, stride=stride, threshold=threshold, mode=mode)


def _detect_entries(params, manifest: DatasetManifest, entries, threshold: float,
                    mode: str, stride: int):
    """Score manifest entries; yields (entry, DetectionResult)."""
    for entry in entries:
        image = load_image(manifest.image_path(entry))
        yield entry, _detect_one(params, image, threshold, mode, stride)


def _map_stem(used: set[str], rel_path: str) -> str:
    stem = Path(rel_path).stem
    if stem in used:
        stem = rel_path.replace("/", "_").rsplit(".", 1)[0]
    used.add(stem)
    return stem


def _write_map_csv(path: Path, score_map: np.ndarray) -> None:
    lines = [",".join(_ft(v) for v in row) for row in score_map]
    path.write_text("\n".join(lines) + "\n")


def _read_map_csv(path: Path) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise InputError(f"malformed score map {path}: {exc}") from exc
    return arr


# -- commands -----------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> None:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise IntegrityError(
                f"output directory {out} is not empty; pass --force to overwrite")
        shutil.rmtree(out)
    cfg = SynthConfig(n_train=args.normal, n_test_normal=args.defect,
                      n_test_defect=args.defect, patch_size=args.patch_size,
                      seed=args.seed).validate()
    with _RunDir(args) as run:
        manifest = synth_corpus(cfg, run)
        print(f"wrote {len(manifest.entries)} corpus entries under {run}")


def cmd_train(args: argparse.Namespace) -> None:
    manifest = DatasetManifest.load(args.data)
    images, freqs, patch = _load_training_arrays(manifest, args.patch_size)
    cfg = _train_config(args, args.loss, args.seed)
    with _RunDir(args) as run:
        every = args.ckpt_every

        def on_epoch(epoch, params, record):
            print(f"epoch {epoch}/{cfg.epochs}: g_loss={record.g_loss:.5f} "
                  f"recon={record.recon:.5f}", flush=True)
            if every > 0 and epoch % every == 0 and epoch != cfg.epochs:
                save_checkpoint(params, run / f"model_epoch{epoch:04d}.ckpt")

        params, log = train((images, freqs), cfg, epoch_callback=on_epoch)
        save_checkpoint(params, run / "model.ckpt")
        (run / "train_log.csv").write_text(log.to_csv())
        print(f"trained {patch}px model on {images.shape[0]} patches -> {run / 'model.ckpt'}")


def cmd_transform(args: argparse.Namespace) -> None:
    params = load_checkpoint(args.ckpt)
    image = load_image(args.image)
    p = params.patch_size
    if image.shape != (p, p):
        raise IntegrityError(
            f"image shape {image.shape} does not match the checkpoint patch size {p}")
    x_image = normalize_patch(image)
    x_freq = spectrum_image(x_image)
    with no_grad():
        gen_freq = generate(params, Tensor(x_image[None, None]), I2F).data[0, 0]
        gen_image = generate(params, Tensor(x_freq[None, None]), F2I).data[0, 0]
    panels = [("x_image", x_image), ("x_frequency", x_freq),
              ("generated_frequency", gen_freq), ("generated_image", gen_image)]
    with _RunDir(args) as run:
        lines = ["panel,row,col,value"]
        for name, arr in panels:
            write_pgm(run / f"{name}.pgm", arr)
            for r in range(arr.shape[0]):
                for c in range(arr.shape[1]):
                    lines.append(f"{name},{r},{c},{_ft(arr[r, c])}")
        (run / "panels.csv").write_text("\n".join(lines) + "\n")
        print(f"wrote 4 transform panels under {run}")


def cmd_detect(args: argparse.Namespace) -> None:
    if bool(args.data) == bool(args.image):
        raise ConfigurationError("pass exactly one of --data or --image")
    params = load_checkpoint(args.ckpt)
    stride = args.stride if args.stride > 0 else params.patch_size

    with _RunDir(args) as run:
        maps_dir = run / "maps"
        maps_dir.mkdir(exist_ok=True)
        rows = ["path,label,image_score"]
        used: set[str] = set()
        if args.data:
            manifest = DatasetManifest.load(args.data)
            entries = manifest.test_entries()
            if not entries:
                raise InputError(f"manifest under {manifest.root} has no test entries")
            results = _detect_entries(params, manifest, entries, args.threshold,
                                      args.mode, stride)
            for entry, result in results:
                stem = _map_stem(used, entry.path)
                _write_map_csv(maps_dir / f"{stem}.csv", result.score_map)
                write_pgm(maps_dir / f"{stem}.pgm",
                          normalize_patch(result.score_map), maxval=65535)
                rows.append(f"{entry.path},{entry.label},{_ft(result.image_score)}")
        else:
            path = Path(args.image)
            result = _detect_one(params, load_image(path), args.threshold,
                                 args.mode, stride)
            stem = _map_stem(used, path.name)
            _write_map_csv(maps_dir / f"{stem}.csv", result.score_map)
            write_pgm(maps_dir / f"{stem}.pgm",
                      normalize_patch(result.score_map), maxval=65535)
            rows.append(f"{path.name},,{_ft(result.image_score)}")
        (run / "scores.csv").write_text("\n".join(rows) + "\n")
        print(f"scored {len(rows) - 1} image(s) -> {run / 'scores.csv'}")


def _read_scores_csv(path: str):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"scores file {path} not found")
    lines = p.read_text().splitlines()
    if not lines or lines[0] != "path,label,image_score":
        raise InputError(f"{path}: expected a scores.csv with header path,label,image_score")
    scores, labels = [], []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 3:
            raise InputError(f"{path}: malformed row {line!r}")
        try:
            scores.append(float(parts[2]))
        except ValueError:
            raise InputError(f"{path}: non-numeric score in row {line!r}")
        labels.append(parts[1] == "defect")
    if not scores:
        raise InputError(f"{path}: no score rows")
    return np.array(scores), np.array(labels)


def _load_maps_and_gt(maps_dir: str, gt_dir: str):
    maps_path = Path(maps_dir)
    gt_path = Path(gt_dir)
    if not maps_path.is_dir():
        raise InputError(f"maps directory {maps_dir} not found")
    if not gt_path.is_dir():
        raise InputError(f"ground-truth directory {gt_dir} not found")
    map_files = sorted(maps_path.glob("*.csv"))
    if not map_files:
        raise InputError(f"no score-map CSVs under {maps_dir}")
    gt_stems = {p.stem for p in gt_path.glob("*.pgm")}
    map_stems = {p.stem for p in map_files}
    if map_stems != gt_stems:
        missing = sorted(map_stems - gt_stems)[:3]
        extra = sorted(gt_stems - map_stems)[:3]
        raise InputError(
            f"score maps and ground truth are misaligned "
            f"(maps without masks: {missing}, masks without maps: {extra})")
    preds = [_read_map_csv(p) for p in map_files]
    gts = [read_pgm(gt_path / f"{p.stem}.pgm") > 0.5 for p in map_files]
    return preds, gts


def cmd_eval(args: argparse.Namespace) -> None:
    if not args.maps and not args.scores:
        raise ConfigurationError("pass --maps (with --gt) and/or --scores")
    preds = gts = scores = labels = None
    if args.maps:
        if not args.gt:
            raise ConfigurationError("--maps needs --gt")
        preds, gts = _load_maps_and_gt(args.maps, args.gt)
    if args.scores:
        scores, labels = _read_scores_csv(args.scores)
    report = evaluate(preds, gts, scores, labels, tolerance=args.tolerance)
    with _RunDir(args) as run:
        (run / "report.csv").write_text(report.to_csv())
        (run / "summary.csv").write_text(report.summary_csv())
        print(report.to_csv().splitlines()[-1].lstrip("# "))


def cmd_ablation(args: argparse.Namespace) -> None:
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    except ValueError:
        raise ConfigurationError(f"--seeds must be comma-separated integers, got {args.seeds!r}")
    if not seeds or any(s < 0 for s in seeds):
        raise ConfigurationError(f"--seeds must list non-negative integers, got {args.seeds!r}")
    modes = [m.strip() for m in args.loss_modes.split(",") if m.strip()]
    if not modes or any(m not in LOSS_MODES for m in modes):
        raise ConfigurationError(
            f"--loss-modes must be a subset of {','.join(LOSS_MODES)}, got {args.loss_modes!r}")

    manifest = DatasetManifest.load(args.data)
    images, freqs, patch = _load_training_arrays(manifest, args.patch_size)
    entries = manifest.test_entries()
    if not entries:
        raise InputError(f"manifest under {manifest.root} has no test entries")

    with _RunDir(args) as run:
        rows = ["mode,seed,AUROC,AIU,ODS,OIS"]
        per_mode: dict[str, list] = {m: [] for m in modes}
        for seed in seeds:
            for mode in modes:
                cfg = _train_config(args, mode, seed)
                params, _ = train((images, freqs), cfg)
                scores, labels, seg_maps, seg_gts = [], [], [], []
                for entry, result in _detect_entries(params, manifest, entries,
                                                     args.threshold, "fourier", patch):
                    scores.append(result.image_score)
                    labels.append(entry.label == "defect")
                    mask_path = manifest.mask_path(entry)
                    if mask_path is not None:
                        seg_maps.append(result.score_map)
                        seg_gts.append(read_pgm(mask_path) > 0.5)
                report = evaluate(seg_maps or None, seg_gts or None,
                                  np.array(scores), np.array(labels))
                cells = [report.auroc, report.aiu, report.ods, report.ois]
                rows.append(f"{mode},{seed}," + ",".join(
                    "" if c is None else _ft(c) for c in cells))
                per_mode[mode].append(cells)
                print(f"mode={mode} seed={seed} auroc={report.auroc:.4f}", flush=True)
        (run / "ablation.csv").write_text("\n".join(rows) + "\n")

        summary = ["mode,AUROC,AIU,ODS,OIS"]
        for mode in modes:
            stack = per_mode[mode]
            means = []
            for col in range(4):
                values = [row[col] for row in stack if row[col] is not None]
                means.append(_ft(np.mean(values)) if values else "")
            summary.append(f"{mode}," + ",".join(means))
        (run / "ablation_summary.csv").write_text("\n".join(summary) + "\n")
        print(f"wrote {len(rows) - 1} ablation rows -> {run / 'ablation.csv'}")


_HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "transform": cmd_transform,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "ablation": cmd_ablation,
}


def main(argv=None) -> int:
    try:
        args = _parse_args(sys.argv[1:] if argv is None else list(argv))
        args.seed = _resolve_seed(args)
        _HANDLERS[args.command](args)
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"aift: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"aift: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IntegrityError as exc:
        print(f"aift: integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except AiftError as exc:
        print(f"aift: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
