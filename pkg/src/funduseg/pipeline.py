"""Experiment orchestration: preprocess, split, train, evaluate,
cross-validate, compare target modes, export activation maps.

Every run is a pure function of (config, seed): shuffles come from seeded
generators keyed by purpose tags, CSV floats are written with repr() so
re-runs produce byte-identical artifacts, and run manifests deliberately
carry no timestamps or host info.
"""

import hashlib
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import backend
from .errors import ConfigError, Diverged, FundusegError, TooFewSamples
from .losses import FocalConfig, focal_loss_tensor
from .metrics import MetricsRecord, aggregate, score_planes, write_records_csv
from .net import (
    AdamState,
    UNetConfig,
    adam_step,
    backward,
    clip_gradients,
    forward,
    init_params,
    load_checkpoint,
    params_checksum,
    save_checkpoint,
)
from .raster import (
    ChannelRole,
    ChannelStack,
    Image2D,
    LabelMapping,
    LabelMask,
    read_mask,
    read_pgm,
    read_ppm,
    resize_image_bilinear,
    resize_mask_nearest,
    write_pgm,
    write_ppm,
)
from .synth import SynthConfig, generate_sample
from .targets import build_target, decode_prediction, read_stack, write_stack

# rng purpose tags so independent shuffles never share a stream
TAG_SPLIT, TAG_EPOCH, TAG_FOLDS = 1, 2, 3

MODES = ("regions", "edges")


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *[int(t) for t in tags]])


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    source: str = "synthetic"  # 'synthetic' or a dataset directory path
    images: int = 200
    mapping: str = "0:0,128:1,255:2"
    mode: str = "edges"
    train_size: int = 128
    depth: int = 3
    base_filters: int = 16
    epochs: int = 30
    batch: int = 8
    lr: float = 0.01  # initial rate; see lr_schedule
    lr_schedule: str = "cosine"  # 'cosine' decay to 0 over the run, or 'constant'
    clip_norm: float = 0.05  # 0 disables gradient clipping
    seed: int = 7
    split: tuple = (0.7, 0.1, 0.2)
    gamma: float = 2.0
    alpha_background: float = 0.1
    alpha_disc_region: float = 0.5
    alpha_cup_region: float = 0.7
    alpha_disc_edge: float = 0.8
    alpha_cup_edge: float = 0.9
    folds: int = 5
    synth_size: int = 0  # 0 means train_size
    disc_radius: tuple = (22.0, 36.0)
    cup_ratio: tuple = (0.5, 0.8)
    eccentricity: tuple = (0.75, 1.0)
    center_jitter: float = 10.0
    noise: float = 0.08
    vessels: tuple = (2, 5)
    rim: float = 0.6
    hausdorff_boundary: bool = False
    eval_native: bool = False
    out: str = "runs/exp"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ConfigError(f"lr_schedule must be 'cosine' or 'constant', got {self.lr_schedule!r}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {self.split}")
        if self.images < 1:
            raise ConfigError(f"images must be >= 1, got {self.images}")
        if self.train_size % (2 ** self.depth):
            raise ConfigError(
                f"train_size {self.train_size} not divisible by 2^depth = {2 ** self.depth}"
            )

    def out_channels(self) -> int:
        return 5 if self.mode == "edges" else 3

    def unet_config(self) -> UNetConfig:
        return UNetConfig(
            depth=self.depth,
            base_filters=self.base_filters,
            in_channels=3,
            out_channels=self.out_channels(),
        )

    def focal_config(self) -> FocalConfig:
        return FocalConfig(
            gamma=self.gamma,
            alpha_per_role={
                ChannelRole.BACKGROUND: self.alpha_background,
                ChannelRole.DISC_REGION: self.alpha_disc_region,
                ChannelRole.CUP_REGION: self.alpha_cup_region,
                ChannelRole.DISC_EDGE: self.alpha_disc_edge,
                ChannelRole.CUP_EDGE: self.alpha_cup_edge,
            },
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            size=self.synth_size or self.train_size,
            disc_radius=self.disc_radius,
            cup_ratio=self.cup_ratio,
            eccentricity=self.eccentricity,
            center_jitter=self.center_jitter,
            noise=self.noise,
            vessels=self.vessels,
            rim=self.rim,
            seed=self.seed,
        )

    def label_mapping(self) -> LabelMapping:
        return LabelMapping.parse(self.mapping)

    def canonical_text(self) -> str:
        # `out` names where results land, not what gets computed, so it is
        # excluded: runs of one experiment into two directories share a hash
        lines = []
        for name in sorted(self.__dataclass_fields__):
            if name == "out":
                continue
            lines.append(f"{name} = {_format_value(name, getattr(self, name))}\n")
        return "".join(lines)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def _format_value(key, v):
    """Inverse of _parse_value so canonical_text() re-parses to the same config."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        sep = ":" if key in (_RANGE_KEYS | _INT_RANGE_KEYS) else ","
        return sep.join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_RANGE_KEYS = frozenset({"disc_radius", "cup_ratio", "eccentricity"})
_INT_RANGE_KEYS = frozenset({"vessels"})


def parse_config_text(text: str, **overrides) -> ExperimentConfig:
    """Parse a flat key=value config file body ('#' starts a comment)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        values[key.strip()] = val.strip()
    values.update({k: v for k, v in overrides.items() if v is not None})

    fields_ = ExperimentConfig.__dataclass_fields__
    kwargs = {}
    for key, val in values.items():
        if key not in fields_:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[key] = _parse_value(key, val)
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config_text(path.read_text(), **overrides)


def _parse_value(key, val):
    if not isinstance(val, str):
        return val
    ftype = ExperimentConfig.__dataclass_fields__[key].type
    if not isinstance(ftype, str):
        ftype = ftype.__name__
    try:
        if key == "split":
            parts = tuple(float(x) for x in val.split(","))
            if len(parts) != 3:
                raise ConfigError(f"split needs 3 fractions, got {val!r}")
            return parts
        if key in _RANGE_KEYS:
            lo, _, hi = val.partition(":")
            return (float(lo), float(hi if hi else lo))
        if key in _INT_RANGE_KEYS:
            lo, _, hi = val.partition(":")
            return (int(lo), int(hi if hi else lo))
        if ftype == "bool":
            if val.lower() in ("true", "1", "yes"):
                return True
            if val.lower() in ("false", "0", "no"):
                return False
            raise ConfigError(f"{key}: expected true/false, got {val!r}")
        if ftype == "int":
            return int(val)
        if ftype == "float":
            return float(val)
        return val
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


# ---------------------------------------------------------------------------
# Dataset materialization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    image_id: str
    image: np.ndarray  # (H, W, 3) float32
    target: np.ndarray  # (H, W, C) float32
    roles: tuple


def _iter_source(cfg: ExperimentConfig):
    """Yield (id, Image2D, LabelMask) at native resolution, id-sorted."""
    if cfg.source == "synthetic":
        scfg = cfg.synth_config()
        for i in range(cfg.images):
            img, mask = generate_sample(scfg, i)
            yield f"img{i:04d}", img, mask
        return
    root = Path(cfg.source)
    img_dir, mask_dir = root / "images", root / "masks"
    if not img_dir.is_dir() or not mask_dir.is_dir():
        raise FundusegError(f"dataset directory {root} needs images/ and masks/ subdirectories")
    mapping = cfg.label_mapping()
    stems = sorted(p.stem for p in img_dir.iterdir() if p.suffix in (".ppm", ".pgm"))
    if not stems:
        raise FundusegError(f"no .ppm/.pgm images found under {img_dir}")
    for stem in stems:
        ppm = img_dir / f"{stem}.ppm"
        img = read_ppm(ppm) if ppm.exists() else _gray3(read_pgm(img_dir / f"{stem}.pgm"))
        mask_path = mask_dir / f"{stem}.pgm"
        try:
            mask = read_mask(mask_path, mapping)
        except FundusegError as exc:
            raise type(exc)(f"{mask_path}: {exc}") from exc
        yield stem, img, mask


def _gray3(img: Image2D) -> Image2D:
    return Image2D(np.repeat(img.data, 3, axis=2))


def preprocess(cfg: ExperimentConfig):
    """Materialize (image, target stack) pairs at training resolution.

    Writes images/, targets/ and a manifest under <out>/data; re-running
    with the same config overwrites byte-identically. Returns the id list.
    """
    data_dir = Path(cfg.out) / "data"
    (data_dir / "images").mkdir(parents=True, exist_ok=True)
    (data_dir / "targets").mkdir(parents=True, exist_ok=True)
    ids = []
    size = cfg.train_size
    for image_id, img, mask in _iter_source(cfg):
        img = resize_image_bilinear(img, size, size)
        mask = resize_mask_nearest(mask, size, size)
        stack = build_target(mask, cfg.mode)
        write_ppm(data_dir / "images" / f"{image_id}.ppm", img)
        write_stack(data_dir / "targets" / image_id, stack)
        ids.append(image_id)
    manifest = [
        f"config_hash = {cfg.config_hash()}",
        f"mode = {cfg.mode}",
        f"train_size = {size}",
        f"source = {cfg.source}",
    ] + [f"id = {i}" for i in ids]
    (data_dir / "manifest.txt").write_text("".join(l + "\n" for l in manifest))
    return ids


def dataset_ids(cfg: ExperimentConfig):
    manifest = Path(cfg.out) / "data" / "manifest.txt"
    if not manifest.exists():
        raise FundusegError(f"no preprocessed dataset under {cfg.out} (run preprocess first)")
    ids = []
    for line in manifest.read_text().splitlines():
        key, _, val = line.partition(" = ")
        if key == "id":
            ids.append(val)
    return ids


def load_sample(cfg: ExperimentConfig, image_id: str) -> Sample:
    data_dir = Path(cfg.out) / "data"
    img = read_ppm(data_dir / "images" / f"{image_id}.ppm")
    stack = read_stack(data_dir / "targets" / image_id)
    return Sample(
        image_id=image_id,
        image=img.data.astype(np.float32),
        target=stack.data.astype(np.float32),
        roles=stack.roles,
    )


def load_dataset(cfg: ExperimentConfig, ids=None) -> dict:
    return {i: load_sample(cfg, i) for i in (ids if ids is not None else dataset_ids(cfg))}


# ---------------------------------------------------------------------------
# Splitting and folds
# ---------------------------------------------------------------------------

def split(ids, fractions, seed: int):
    """Seeded shuffle then contiguous cut into (train, val, test) id lists."""
    ids = sorted(ids)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {fractions}")
    n = len(ids)
    n_train = int(fractions[0] * n)
    n_val = int(fractions[1] * n)
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise TooFewSamples(f"{n} ids cannot fill fractions {fractions}")
    order = _rng(seed, TAG_SPLIT).permutation(n)
    shuffled = [ids[j] for j in order]
    return (
        shuffled[:n_train],
        shuffled[n_train:n_train + n_val],
        shuffled[n_train + n_val:],
    )


@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: tuple  # tuple of id tuples, disjoint and exhaustive


def fold_plan(ids, k: int, seed: int) -> FoldPlan:
    ids = sorted(ids)
    if k < 2:
        raise ConfigError(f"fold count must be >= 2, got {k}")
    if len(ids) < k:
        raise TooFewSamples(f"{len(ids)} ids cannot fill {k} folds")
    order = _rng(seed, TAG_FOLDS).permutation(len(ids))
    shuffled = [ids[j] for j in order]
    chunks = np.array_split(np.arange(len(ids)), k)
    return FoldPlan(k=k, folds=tuple(tuple(shuffled[j] for j in chunk) for chunk in chunks))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    final_params: dict
    best_params: dict
    log_rows: list  # (epoch, train_loss, val_loss)
    init_checksum: str


def learning_rate_at(cfg: ExperimentConfig, step: int, total_steps: int) -> float:
    """Per-step learning rate: cfg.lr is the initial rate, optionally decayed
    to 0 along a cosine. Constant lr orbits a limit cycle on this loss (the
    structure boundary over/under-shoots forever), so cosine is the default."""
    if cfg.lr_schedule == "constant" or total_steps <= 1:
        return cfg.lr
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * step / (total_steps - 1)))


def fit(cfg: ExperimentConfig, data: dict, train_ids, val_ids) -> FitResult:
    """Adam training loop over seeded-shuffled batches, reshuffled per epoch.

    Keeps the best-validation-loss parameters alongside the final ones and
    aborts with Diverged on a non-finite loss.
    """
    ucfg = cfg.unet_config()
    roles = ucfg.roles()
    alphas = cfg.focal_config().alphas_for(roles)
    params = init_params(ucfg, cfg.seed, dtype=np.float32)
    init_checksum = params_checksum(params)
    state = AdamState.for_params(params)
    best_loss, best_params = math.inf, params
    rows = []
    steps_per_epoch = math.ceil(len(train_ids) / cfg.batch)
    total_steps = cfg.epochs * steps_per_epoch
    step = 0
    for epoch in range(cfg.epochs):
        order = _rng(cfg.seed, TAG_EPOCH, epoch).permutation(len(train_ids))
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch):
            chunk = [train_ids[j] for j in order[start:start + cfg.batch]]
            x = np.stack([data[i].image for i in chunk])
            y = np.stack([data[i].target for i in chunk])
            probs, cache = forward(params, ucfg, x)
            loss, dprobs = focal_loss_tensor(probs, y, alphas, cfg.gamma)
            if not math.isfinite(loss):
                raise Diverged(f"training loss became non-finite at epoch {epoch}")
            grads = backward(params, ucfg, cache, dprobs)
            grads = clip_gradients(grads, cfg.clip_norm)
            params, state = adam_step(params, grads, state, learning_rate_at(cfg, step, total_steps))
            step += 1
            total += loss * len(chunk)
            count += len(chunk)
        val_loss = dataset_loss(params, ucfg, data, val_ids, alphas, cfg.gamma, cfg.batch)
        if not math.isfinite(val_loss):
            raise Diverged(f"validation loss became non-finite at epoch {epoch}")
        rows.append((epoch, total / count, val_loss))
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = {k: a.copy() for k, a in params.items()}
    return FitResult(params, best_params, rows, init_checksum)


def dataset_loss(params, ucfg, data, ids, alphas, gamma, batch) -> float:
    """Mean focal loss over a fixed id list (forward only)."""
    total, count = 0.0, 0
    ids = sorted(ids)
    for start in range(0, len(ids), batch):
        chunk = ids[start:start + batch]
        x = np.stack([data[i].image for i in chunk])
        y = np.stack([data[i].target for i in chunk])
        probs, _ = forward(params, ucfg, x)
        loss, _ = focal_loss_tensor(probs, y, alphas, gamma)
        total += loss * len(chunk)
        count += len(chunk)
    return total / count


def train(cfg: ExperimentConfig):
    """CLI-facing training: preprocessed data in, checkpoints and loss log out."""
    out = Path(cfg.out)
    ids = dataset_ids(cfg)
    train_ids, val_ids, test_ids = split(ids, cfg.split, cfg.seed)
    data = load_dataset(cfg, ids)
    result = fit(cfg, data, train_ids, val_ids)
    ucfg = cfg.unet_config()
    save_checkpoint(out / "ckpt_final.bin", result.final_params, ucfg)
    save_checkpoint(out / "ckpt_best.bin", result.best_params, ucfg)
    _write_loss_log(out / "train_log.csv", result.log_rows)
    _write_split(out / "split.csv", train_ids, val_ids, test_ids)
    _write_run_manifest(out, cfg, extra={"init_checksum": result.init_checksum})
    return result


def _write_loss_log(path, rows):
    lines = ["epoch,train_loss,val_loss"]
    lines += [f"{e},{repr(tr)},{repr(va)}" for e, tr, va in rows]
    Path(path).write_text("".join(l + "\n" for l in lines))


def read_loss_log(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "epoch,train_loss,val_loss":
        raise ValueError(f"unexpected loss log header in {path}")
    out = []
    for line in lines[1:]:
        e, tr, va = line.split(",")
        out.append((int(e), float(tr), float(va)))
    return out


def _write_split(path, train_ids, val_ids, test_ids):
    lines = ["image_id,subset"]
    for subset, subset_ids in (("train", train_ids), ("val", val_ids), ("test", test_ids)):
        lines += [f"{i},{subset}" for i in subset_ids]
    Path(path).write_text("".join(l + "\n" for l in lines))


def read_split(path):
    groups = {"train": [], "val": [], "test": []}
    lines = Path(path).read_text().splitlines()
    for line in lines[1:]:
        image_id, _, subset = line.partition(",")
        groups[subset].append(image_id)
    return groups["train"], groups["val"], groups["test"]


def _write_run_manifest(out_dir, cfg: ExperimentConfig, extra=None):
    lines = [
        f"config_hash = {cfg.config_hash()}",
        f"seed = {cfg.seed}",
        f"backend = {backend.get_backend()}",
        f"train_size = {cfg.train_size}",
        f"mode = {cfg.mode}",
        f"eval_resolution = {'native' if cfg.eval_native else cfg.train_size}",
    ]
    for key, val in (extra or {}).items():
        lines.append(f"{key} = {val}")
    names = sorted(x.name for x in Path(out_dir).iterdir() if x.is_file())
    lines += [f"artifact = {p}" for p in names if p != "run_manifest.txt"]
    (Path(out_dir) / "run_manifest.txt").write_text("".join(l + "\n" for l in lines))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _predict_stack(params, ucfg, sample: Sample) -> ChannelStack:
    probs, _ = forward(params, ucfg, sample.image[None])
    return ChannelStack(ucfg.roles(), np.clip(probs[0].astype(np.float64), 0.0, 1.0))


def _resize_binary_nearest(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = plane.shape
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    return plane[np.ix_(rows, cols)]


def _native_mask(cfg: ExperimentConfig, image_id: str) -> LabelMask:
    if cfg.source == "synthetic":
        return generate_sample(cfg.synth_config(), int(image_id[3:]))[1]
    return read_mask(Path(cfg.source) / "masks" / f"{image_id}.pgm", cfg.label_mapping())


def evaluate(cfg: ExperimentConfig, ckpt_path, ids, out_csv=None):
    """Per-image metrics for a checkpoint over an id list, plus aggregates.

    Metric failures on single images are recorded as NaN rather than
    aborting the run. Returns (records, aggregate_summary).
    """
    params, ucfg = load_checkpoint(ckpt_path)
    records = []
    for image_id in sorted(ids):
        sample = load_sample(cfg, image_id)
        pred = _predict_stack(params, ucfg, sample)
        true_stack = ChannelStack(sample.roles, sample.target.astype(np.float64))
        pred_disc, pred_cup = decode_prediction(pred)
        true_disc, true_cup = decode_prediction(true_stack)
        if cfg.eval_native:
            native = _native_mask(cfg, image_id)
            h, w = native.height, native.width
            pred_disc = _resize_binary_nearest(pred_disc, h, w)
            pred_cup = _resize_binary_nearest(pred_cup, h, w)
            true_disc = (native.labels > 0).astype(np.uint8)
            true_cup = (native.labels == 2).astype(np.uint8)
        try:
            rec = score_planes(
                image_id, pred_disc, pred_cup, true_disc, true_cup,
                boundary_only=cfg.hausdorff_boundary,
            )
        except FundusegError:
            rec = MetricsRecord(image_id, math.nan, math.nan, math.nan, math.nan, math.nan)
        records.append(rec)
    summary = aggregate(records)
    if out_csv is not None:
        write_records_csv(out_csv, records)
    return records, summary


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

def crossval(cfg: ExperimentConfig, k: int = None):
    """k-fold cross-validation of mean optic-disc dice; emits a row-per-mode
    CSV shaped fold_1..fold_k, average, median."""
    k = cfg.folds if k is None else k
    out = Path(cfg.out)
    ids = dataset_ids(cfg)
    plan = fold_plan(ids, k, cfg.seed)
    data = load_dataset(cfg, ids)
    fold_dice = []
    for fi, test_fold in enumerate(plan.folds):
        pool = [i for i in ids if i not in set(test_fold)]
        order = _rng(cfg.seed, TAG_FOLDS, fi).permutation(len(pool))
        shuffled = [pool[j] for j in order]
        n_val = max(1, len(shuffled) // 10)
        val_ids, train_ids = shuffled[:n_val], shuffled[n_val:]
        result = fit(cfg, data, train_ids, val_ids)
        ucfg = cfg.unet_config()
        ckpt = out / f"ckpt_fold{fi}.bin"
        save_checkpoint(ckpt, result.best_params, ucfg)
        records, summary = evaluate(cfg, ckpt, list(test_fold))
        fold_dice.append(summary["dice_disc"]["mean"])
    header = ["mode"] + [f"fold_{i + 1}" for i in range(k)] + ["average", "median"]
    row = [cfg.mode] + [repr(d) for d in fold_dice]
    row += [repr(float(np.mean(fold_dice))), repr(float(np.median(fold_dice)))]
    csv_path = out / "crossval.csv"
    csv_path.write_text(",".join(header) + "\n" + ",".join(row) + "\n")
    _write_run_manifest(out, cfg)
    return plan, fold_dice


# ---------------------------------------------------------------------------
# Mode comparison (regions-only vs edge-integrated)
# ---------------------------------------------------------------------------

def compare(cfg: ExperimentConfig):
    """Run the full pipeline once per target mode with identical seed and
    splits; emit a side-by-side summary with deltas (edges minus regions)."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    summaries = {}
    checksums = {}
    id_lists = {}
    for mode in MODES:
        arm = replace(cfg, mode=mode, out=str(out / mode))
        ids = preprocess(arm)
        train_ids, val_ids, test_ids = split(ids, arm.split, arm.seed)
        id_lists[mode] = (train_ids, val_ids, test_ids)
        data = load_dataset(arm, ids)
        result = fit(arm, data, train_ids, val_ids)
        ucfg = arm.unet_config()
        save_checkpoint(Path(arm.out) / "ckpt_final.bin", result.final_params, ucfg)
        save_checkpoint(Path(arm.out) / "ckpt_best.bin", result.best_params, ucfg)
        _write_loss_log(Path(arm.out) / "train_log.csv", result.log_rows)
        _write_split(Path(arm.out) / "split.csv", train_ids, val_ids, test_ids)
        checksums[mode] = result.init_checksum
        _, summary = evaluate(
            arm, Path(arm.out) / "ckpt_best.bin", test_ids, Path(arm.out) / "metrics_test.csv"
        )
        summaries[mode] = summary
        _write_run_manifest(Path(arm.out), arm, extra={"init_checksum": result.init_checksum})
    if id_lists["regions"] != id_lists["edges"]:
        raise FundusegError("compare arms disagree on split id lists")

    stats = ("mean_dice", "median_dice", "mean_hausdorff", "median_hausdorff")
    lines = ["mode,structure," + ",".join(stats)]
    table = {}
    for structure in ("disc", "cup"):
        for mode in MODES:
            s = summaries[mode]
            row = (
                s[f"dice_{structure}"]["mean"],
                s[f"dice_{structure}"]["median"],
                s[f"hausdorff_{structure}"]["mean"],
                s[f"hausdorff_{structure}"]["median"],
            )
            table[(mode, structure)] = row
            lines.append(f"{mode},{structure}," + ",".join(repr(v) for v in row))
        delta = tuple(
            e - r for e, r in zip(table[("edges", structure)], table[("regions", structure)])
        )
        lines.append(f"delta,{structure}," + ",".join(repr(v) for v in delta))
    (out / "compare.csv").write_text("".join(l + "\n" for l in lines))

    manifest = [
        f"config_hash = {cfg.config_hash()}",
        f"seed = {cfg.seed}",
        f"backend = {backend.get_backend()}",
        f"init_checksum_regions = {checksums['regions']}",
        f"init_checksum_edges = {checksums['edges']}",
        "test_ids = " + " ".join(id_lists["edges"][2]),
    ]
    (out / "compare_manifest.txt").write_text("".join(l + "\n" for l in manifest))
    return table


# ---------------------------------------------------------------------------
# Activation maps
# ---------------------------------------------------------------------------

def export_activation_maps(cfg: ExperimentConfig, ckpt_path, ids, out_dir):
    """One grayscale PGM per (image, channel), probability 1.0 mapped to 255."""
    params, ucfg = load_checkpoint(ckpt_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for image_id in sorted(ids):
        sample = load_sample(cfg, image_id)
        stack = _predict_stack(params, ucfg, sample)
        for role in stack.roles:
            path = out_dir / f"{image_id}_{role.value}.pgm"
            write_pgm(path, stack.plane(role))
            written.append(path)
    return written
