"""Experiment orchestration: collective corruption removal, generalization to
unseen images, and the sample-size study, with CSV/Markdown reports.

All randomness is derived from the experiment seed through fixed stream
indices (dataset synthesis, the train/unseen partition, one corruption
stream per ratio and split, one training stream per cell), so parallel and
serial schedules produce identical reports.
"""

import csv
import json
import math
import struct
import time
from dataclasses import dataclass, field, fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import baselines, data, metrics, numkit
from . import autoencoder as ae
from .numkit import Rng
from .report import SolveReport

DATASETS = ("mnist", "cifar10", "circle", "swiss_roll", "low_rank")
METHODS = ("l1_rae", "l12_rae", "frob_ae", "rda", "nrpca", "rae_cha", "rpca", "linear_l1")
GENERALIZABLE = ("l1_rae", "l12_rae", "frob_ae", "rae_cha", "linear_l1")

# fixed stream indices for seed derivation
_STREAM_SYNTH = 7
_STREAM_PARTITION = 11
_STREAM_CORRUPT_GIVEN = 1000
_STREAM_CORRUPT_UNSEEN = 5000
_STREAM_CELL = 2000


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    dataset: str
    corruption_ratios: list
    methods: list
    train_count: int
    unseen_count: int = 0
    seed: int = 0
    output_dir: str = "runs"
    epochs: int = 60
    batch_size: int = 128
    latent_dim: int = None
    learning_rate: float = 1e-4
    method_params: dict = field(default_factory=dict)
    sample_levels: list = field(default_factory=lambda: [1000, 3000, 10000])
    mnist_images: str = None
    mnist_labels: str = None
    cifar_batches: list = None
    synth: dict = field(default_factory=dict)
    dump_count: int = 0
    stable_report: bool = True
    schema_version: int = 1

    def __post_init__(self):
        if self.schema_version != 1:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}; expected one of {DATASETS}")
        for r in self.corruption_ratios:
            if not 0.0 <= r <= 1.0:
                raise ConfigError(f"corruption ratio {r} outside [0, 1]")
        if not self.corruption_ratios:
            raise ConfigError("corruption_ratios must not be empty")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")
        if self.train_count < 0 or self.unseen_count < 0:
            raise ConfigError("train_count and unseen_count must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.dump_count < 0:
            raise ConfigError("dump_count must be >= 0")
        if self.dataset == "mnist" and (not self.mnist_images or not self.mnist_labels):
            raise ConfigError("mnist dataset needs mnist_images and mnist_labels paths")
        if self.dataset == "cifar10" and not self.cifar_batches:
            raise ConfigError("cifar10 dataset needs cifar_batches paths")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclass_fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(payload)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}

    def apply_long(self):
        """Full-scale counts for the --long flag."""
        if self.dataset == "mnist":
            self.train_count, self.unseen_count = 50000, 10000
            self.sample_levels = [10000, 30000, 50000]
        elif self.dataset == "cifar10":
            self.train_count, self.unseen_count = 40000, 10000
            self.sample_levels = [10000, 30000, 40000]
        else:
            self.train_count *= 5
            self.unseen_count *= 5
            self.sample_levels = [lv * 5 for lv in self.sample_levels]


@dataclass
class ResultRow:
    dataset: str
    method: str
    ratio: float
    split: str
    psnr_db: float
    ssim: float
    wall_time_s: float
    seed: int
    error: str = ""  # not serialized; non-empty marks a failed cell


@dataclass
class GapRow:
    method: str
    sample_level: str  # S | M | L
    ratio: float
    psnr_given: float
    psnr_unseen: float
    delta_psnr: float
    ssim_given: float
    ssim_unseen: float
    delta_ssim: float


RESULT_COLUMNS = ("dataset", "method", "ratio", "split", "psnr_db", "ssim",
                  "wall_time_s", "seed")
GAP_COLUMNS = ("method", "sample_level", "ratio", "psnr_given", "psnr_unseen",
               "delta_psnr", "ssim_given", "ssim_unseen", "delta_ssim")


# --- trained models --------------------------------------------------------------

_LINEAR_MAGIC = b"RLIN"


@dataclass
class TrainedModel:
    """A frozen restorer that can be applied to new corrupted matrices."""

    method: str
    kind: str  # mlp | linear_pair | linear_sigmoid_pair
    payload: object

    def apply(self, matrix):
        if self.kind == "mlp":
            return ae.denoise(self.payload, matrix)
        a_map, b_map = self.payload
        code = a_map @ matrix
        if self.kind == "linear_sigmoid_pair":
            code = ae._sigmoid(code)
        return b_map @ code

    def save(self, path):
        if self.kind == "mlp":
            ae.save_checkpoint(path, self.payload, loss_kind=self.method)
            return
        a_map, b_map = self.payload
        header = json.dumps(
            {"kind": self.kind, "method": self.method}, sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_LINEAR_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(numkit.rmat_bytes(a_map))
            fh.write(numkit.rmat_bytes(b_map))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(4)
        if magic == ae.CHECKPOINT_MAGIC:
            model, header = ae.load_checkpoint(path)
            return cls(method=header.get("loss_kind", "l1_rae"), kind="mlp", payload=model)
        if magic != _LINEAR_MAGIC:
            raise ValueError(f"unrecognized model file {path}")
        raw = Path(path).read_bytes()
        (hlen,) = struct.unpack("<I", raw[4:8])
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
        a_map, used = numkit.rmat_from_bytes(raw, 8 + hlen)
        b_map, _ = numkit.rmat_from_bytes(raw, 8 + hlen + used)
        return cls(method=header["method"], kind=header["kind"], payload=(a_map, b_map))


@dataclass
class MethodOutcome:
    method: str
    restored: np.ndarray
    model: TrainedModel = None
    report: SolveReport = None


# --- per-method training ----------------------------------------------------------

def default_dims(n, latent=None):
    """MLP shape used when a config does not pin one."""
    if latent is None:
        latent = 32 if n > 128 else max(2, n // 4)
    hidden = [256, 64] if n > 128 else [64, 16]
    encoder = [n] + hidden + [latent]
    decoder = [latent] + hidden[::-1] + [n]
    return encoder, decoder


def method_defaults(method, n, config=None):
    """Hyperparameters for one method, merged with any config overrides."""
    epochs = config.epochs if config else 60
    batch = config.batch_size if config else 128
    lr = config.learning_rate if config else 1e-4
    latent = (config.latent_dim if config else None) or (32 if n > 128 else max(2, n // 4))
    base = {
        "l1_rae": {"epochs": epochs, "batch_size": batch, "learning_rate": lr, "latent": latent},
        "l12_rae": {"epochs": epochs, "batch_size": batch, "learning_rate": lr, "latent": latent},
        "frob_ae": {"epochs": epochs, "batch_size": batch, "learning_rate": lr, "latent": latent},
        "rda": {
            "lambda": 0.15, "rounds": 4, "inner_epochs": max(1, epochs // 4),
            "batch_size": batch, "learning_rate": lr, "latent": latent,
        },
        # The shallow maps need a far larger step size than the deep nets to
        # move at all within a desk-scale budget; override via method_params.
        "rae_cha": {
            "lambda1": 1e-4, "lambda2": 0.2, "rounds": 4,
            "inner_epochs": max(1, epochs // 4), "batch_size": batch,
            "learning_rate": 1e-2, "latent": latent,
        },
        "nrpca": {
            "k_neighbors": 40, "rounds": 2, "lambda": 1.0,
            "inner_tol": 1e-6, "inner_max_iter": 150,
        },
        "rpca": {"lambda": None, "tol": 1e-7, "max_iter": 500},
        "linear_l1": {
            "epochs": epochs, "batch_size": batch, "learning_rate": 1e-2, "latent": latent,
        },
    }[method]
    if config is not None:
        base.update(config.method_params.get(method, {}))
    return base


_RAE_LOSSES = {"l1_rae": ae.L1, "l12_rae": ae.L1_OVER_L2, "frob_ae": ae.SQUARED_FROBENIUS}


def train_method(method, corrupted, params, seed):
    """Train/solve one method on the corrupted matrix alone.

    The clean data never enters here: restoration quality is computed by the
    callers against held-back references.
    """
    x = numkit.as_matrix(corrupted, "corrupted")
    n = x.shape[0]
    init_seed = Rng(seed).child(1).seed
    run_seed = Rng(seed).child(2).seed
    if method in _RAE_LOSSES:
        encoder, decoder = default_dims(n, params["latent"])
        model = ae.init(encoder, decoder, seed=init_seed)
        cfg = ae.TrainConfig(
            epochs=params["epochs"], batch_size=params["batch_size"], seed=run_seed,
            loss=_RAE_LOSSES[method], learning_rate=params["learning_rate"],
        )
        model, report = ae.train(model, x, cfg)
        restored = ae.denoise(model, x)
        return MethodOutcome(method, restored, TrainedModel(method, "mlp", model), report)
    if method == "rda":
        encoder, decoder = default_dims(n, params["latent"])
        cfg = baselines.AlternationConfig(
            rounds=params["rounds"], inner_epochs=params["inner_epochs"],
            batch_size=params["batch_size"], seed=init_seed,
            learning_rate=params["learning_rate"],
        )
        model, clean_estimate, _, report = baselines.rda(
            x, (encoder, decoder), params["lambda"], cfg
        )
        return MethodOutcome(method, clean_estimate, None, report)
    if method == "rae_cha":
        cfg = baselines.AlternationConfig(
            rounds=params["rounds"], inner_epochs=params["inner_epochs"],
            batch_size=params["batch_size"], seed=init_seed,
            learning_rate=params["learning_rate"],
        )
        a_map, b_map, sparse, report = baselines.rae_cha(
            x, params["latent"], params["lambda1"], params["lambda2"], cfg
        )
        # Restoration = data minus detected corruption (exact off-support);
        # unseen data goes through the forward map, where no C is available.
        restored = x - sparse
        model = TrainedModel(method, "linear_sigmoid_pair", (a_map, b_map))
        return MethodOutcome(method, restored, model, report)
    if method == "nrpca":
        cfg = baselines.NrpcaConfig(
            k_neighbors=params["k_neighbors"], rounds=params["rounds"],
            lambda_=params["lambda"], inner_tol=params["inner_tol"],
            inner_max_iter=params["inner_max_iter"],
        )
        restored, report = baselines.nrpca(x, cfg)
        return MethodOutcome(method, restored, None, report)
    if method == "rpca":
        low_rank, _, report = baselines.rpca_admm(
            x, lam=params["lambda"], tol=params["tol"], max_iter=params["max_iter"]
        )
        return MethodOutcome(method, low_rank, None, report)
    if method == "linear_l1":
        cfg = ae.TrainConfig(
            epochs=params["epochs"], batch_size=params["batch_size"], seed=init_seed,
            learning_rate=params["learning_rate"],
        )
        a_map, b_map, report = baselines.linear_l1_factorization(x, params["latent"], cfg)
        restored = b_map @ (a_map @ x)
        model = TrainedModel(method, "linear_pair", (a_map, b_map))
        return MethodOutcome(method, restored, model, report)
    raise ConfigError(f"unknown method {method!r}")


# --- dataset handling --------------------------------------------------------------

def load_dataset(config, minimum_count=None):
    if config.dataset == "mnist":
        dataset = data.load_mnist(config.mnist_images, config.mnist_labels)
    elif config.dataset == "cifar10":
        dataset = data.load_cifar10(config.cifar_batches)
    else:
        needed = max(
            config.train_count + config.unseen_count,
            (max(config.sample_levels, default=0)) + config.unseen_count,
            minimum_count or 0,
            1,
        )
        synth = dict(config.synth)
        count = synth.pop("count", needed)
        dataset = data.synth_manifold(
            config.dataset,
            ambient_dim=synth.pop("ambient_dim", 16),
            count=count,
            noise_sigma=synth.pop("noise_sigma", 0.0),
            seed=Rng(config.seed).child(_STREAM_SYNTH).seed,
            rank=synth.pop("rank", 5),
            height=synth.pop("height", None),
            width=synth.pop("width", None),
        )
        if synth:
            raise ConfigError(f"unknown synth keys: {sorted(synth)}")
    if minimum_count and dataset.count < minimum_count:
        raise ConfigError(
            f"dataset has {dataset.count} columns, pipeline needs {minimum_count}"
        )
    return dataset


def partition(config, dataset):
    """Disjoint (given, unseen) splits, deterministic under the config seed."""
    total = config.train_count + config.unseen_count
    if total > dataset.count:
        raise ConfigError(
            f"train_count + unseen_count = {total} exceeds dataset size {dataset.count}"
        )
    seed = Rng(config.seed).child(_STREAM_PARTITION).seed
    given, unseen = data.split(dataset, [config.train_count, config.unseen_count], seed)
    return given, unseen


def _corruption_spec(config, ratio_index, split):
    stream = _STREAM_CORRUPT_GIVEN if split == "given" else _STREAM_CORRUPT_UNSEEN
    return data.CorruptionSpec(
        ratio=config.corruption_ratios[ratio_index],
        seed=Rng(config.seed).child(stream + ratio_index).seed,
    )


def _cell_seed(config, ratio_index, method):
    index = ratio_index * len(METHODS) + METHODS.index(method)
    return Rng(config.seed).child(_STREAM_CELL + index).seed


def _metric_row(config, method, ratio, split, reference, restored_images, wall, seed,
                error=""):
    if error:
        return ResultRow(config.dataset, method, ratio, split, math.nan, math.nan,
                         wall, seed, error)
    report = metrics.evaluate(reference, restored_images)
    return ResultRow(config.dataset, method, ratio, split, report.psnr_db, report.ssim,
                     wall, seed)


# --- pipelines ----------------------------------------------------------------------

def run_collective(config, dataset=None, parallel_map=None):
    """Corrupt -> solve -> score on the given split, per (method, ratio).

    Returns (rows, outcomes) where outcomes maps (method, ratio_index) to the
    MethodOutcome (None for failed cells).  Training cells only ever receive
    the corrupted matrix; metrics against the held-back clean images are
    computed here afterwards.  `parallel_map` is an optional map() override
    used by the CLI --jobs flag; cells carry their own derived seeds, so any
    schedule yields the same rows.
    """
    if dataset is None:
        dataset = load_dataset(config)
    given, _ = partition(config, dataset)
    corrupted_sets = []
    tasks = []
    for ratio_index, ratio in enumerate(config.corruption_ratios):
        spec = _corruption_spec(config, ratio_index, "given")
        corrupted = data.corrupt(given, spec)
        corrupted_sets.append(corrupted)
        for method in config.methods:
            tasks.append((config, ratio_index, ratio, method,
                          corrupted.corrupted.images))
    mapper = parallel_map if parallel_map is not None else map
    results = list(mapper(_run_cell_task, tasks))

    rows = []
    outcomes = {}
    cursor = 0
    for ratio_index, ratio in enumerate(config.corruption_ratios):
        corrupted = corrupted_sets[ratio_index]
        rows.append(
            _metric_row(config, "baseline", ratio, "given", given,
                        corrupted.corrupted, 0.0, corrupted.spec.seed)
        )
        for method in config.methods:
            outcome, wall, error, seed = results[cursor]
            cursor += 1
            outcomes[(method, ratio_index)] = outcome
            if error:
                rows.append(ResultRow(config.dataset, method, ratio, "given",
                                      math.nan, math.nan, wall, seed, error))
                continue
            restored = given.with_images(np.clip(outcome.restored, 0.0, 1.0))
            rows.append(
                _metric_row(config, method, ratio, "given", given, restored,
                            wall, seed)
            )
    return rows, outcomes


def _run_cell_task(task):
    """Train one (method, ratio) cell; picklable for process pools."""
    config, ratio_index, ratio, method, corrupted_matrix = task
    seed = _cell_seed(config, ratio_index, method)
    params = method_defaults(method, corrupted_matrix.shape[0], config)
    start = time.perf_counter()
    try:
        outcome = train_method(method, corrupted_matrix, params, seed)
    except Exception as exc:  # recorded per row; the run continues
        return None, time.perf_counter() - start, f"{type(exc).__name__}: {exc}", seed
    return outcome, time.perf_counter() - start, "", seed


def run_generalization(config, dataset=None, outcomes=None):
    """Score the frozen collective models on a disjoint unseen split.

    Only forward-pass methods produce unseen rows; iterative solvers (rpca,
    nrpca, rda) are excluded.  Baseline rows for the unseen corruption are
    always included.  Returns rows tagged split="unseen".
    """
    if dataset is None:
        dataset = load_dataset(config)
    if config.unseen_count == 0:
        return []
    given, unseen = partition(config, dataset)
    if outcomes is None:
        _, outcomes = run_collective(config, dataset=dataset)
    rows = []
    for ratio_index, ratio in enumerate(config.corruption_ratios):
        spec = _corruption_spec(config, ratio_index, "unseen")
        corrupted = data.corrupt(unseen, spec)
        rows.append(
            _metric_row(config, "baseline", ratio, "unseen", unseen,
                        corrupted.corrupted, 0.0, spec.seed)
        )
        for method in config.methods:
            if method not in GENERALIZABLE:
                continue
            seed = _cell_seed(config, ratio_index, method)
            outcome = outcomes.get((method, ratio_index))
            if outcome is None or outcome.model is None:
                rows.append(ResultRow(config.dataset, method, ratio, "unseen",
                                      math.nan, math.nan, 0.0, seed,
                                      error="missing trained model"))
                continue
            start = time.perf_counter()
            restored = np.clip(outcome.model.apply(corrupted.corrupted.images), 0.0, 1.0)
            wall = time.perf_counter() - start
            rows.append(
                _metric_row(config, method, ratio, "unseen", unseen,
                            unseen.with_images(restored), wall, seed)
            )
    return rows


def run_sample_size(config, dataset=None):
    """Nested training levels against one fixed unseen split; returns GapRows."""
    levels = sorted(int(v) for v in config.sample_levels)
    if len(levels) != 3:
        raise ConfigError(f"sample_levels must list exactly 3 sizes, got {levels}")
    level_labels = ("S", "M", "L")
    for method in config.methods:
        if method not in GENERALIZABLE:
            raise ConfigError(
                f"sample-size study needs forward-pass methods, got {method!r}"
            )
    if dataset is None:
        dataset = load_dataset(config, minimum_count=levels[-1] + config.unseen_count)
    pool_config_total = levels[-1] + config.unseen_count
    if pool_config_total > dataset.count:
        raise ConfigError(
            f"sample levels need {pool_config_total} columns, dataset has {dataset.count}"
        )
    seed = Rng(config.seed).child(_STREAM_PARTITION).seed
    pool, unseen = data.split(dataset, [levels[-1], config.unseen_count], seed)
    gaps = []
    for ratio_index, ratio in enumerate(config.corruption_ratios):
        given_spec = _corruption_spec(config, ratio_index, "given")
        pool_corrupted = data.corrupt(pool, given_spec)
        unseen_spec = _corruption_spec(config, ratio_index, "unseen")
        unseen_corrupted = data.corrupt(unseen, unseen_spec)
        for level_index, level in enumerate(levels):
            sub_clean = pool.take(np.arange(level))
            sub_corrupted = pool_corrupted.corrupted.take(np.arange(level))
            for method in config.methods:
                cell_seed = Rng(_cell_seed(config, ratio_index, method)).child(level).seed
                params = method_defaults(method, dataset.pixels, config)
                outcome = train_method(method, sub_corrupted.images, params, cell_seed)
                restored_given = sub_clean.with_images(
                    np.clip(outcome.restored, 0.0, 1.0)
                )
                given_report = metrics.evaluate(sub_clean, restored_given)
                restored_unseen = unseen.with_images(
                    np.clip(outcome.model.apply(unseen_corrupted.corrupted.images), 0.0, 1.0)
                )
                unseen_report = metrics.evaluate(unseen, restored_unseen)
                gaps.append(GapRow(
                    method=method,
                    sample_level=level_labels[level_index],
                    ratio=ratio,
                    psnr_given=given_report.psnr_db,
                    psnr_unseen=unseen_report.psnr_db,
                    delta_psnr=given_report.psnr_db - unseen_report.psnr_db,
                    ssim_given=given_report.ssim,
                    ssim_unseen=unseen_report.ssim,
                    delta_ssim=given_report.ssim - unseen_report.ssim,
                ))
    return gaps


# --- reports -------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report(rows, format="csv", path=None):
    """Serialize result rows; returns the text and optionally writes `path`.

    CSV keeps full float precision (round-trips exactly); markdown renders
    2-decimal cells and bolds the best PSNR and SSIM per (dataset, ratio,
    split) group.
    """
    if not rows:
        raise ValueError("no rows to report")
    is_gap = isinstance(rows[0], GapRow)
    columns = GAP_COLUMNS if is_gap else RESULT_COLUMNS
    if format == "csv":
        lines = [",".join(columns)]
        for row in rows:
            lines.append(",".join(_fmt(getattr(row, c)) for c in columns))
        text = "\n".join(lines) + "\n"
    elif format == "markdown":
        text = _markdown_table(rows, columns, is_gap)
    else:
        raise ValueError(f"unknown report format {format!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def _markdown_table(rows, columns, is_gap):
    best_psnr = {}
    best_ssim = {}
    if not is_gap:
        for row in rows:
            key = (row.dataset, row.ratio, row.split)
            if not math.isnan(row.psnr_db):
                if key not in best_psnr or row.psnr_db > best_psnr[key]:
                    best_psnr[key] = row.psnr_db
            if not math.isnan(row.ssim):
                if key not in best_ssim or row.ssim > best_ssim[key]:
                    best_ssim[key] = row.ssim
    lines = ["| " + " | ".join(columns) + " |",
             "|" + "|".join("---" for _ in columns) + "|"]
    for row in rows:
        cells = []
        for c in columns:
            v = getattr(row, c)
            if isinstance(v, float):
                cell = f"{v:.2f}"
                if not is_gap and not math.isnan(v):
                    key = (row.dataset, row.ratio, row.split)
                    if (c == "psnr_db" and v == best_psnr.get(key)) or (
                        c == "ssim" and v == best_ssim.get(key)
                    ):
                        cell = f"**{cell}**"
            else:
                cell = str(v)
            cells.append(cell)
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def parse_result_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for record in reader:
            rows.append(ResultRow(
                dataset=record["dataset"],
                method=record["method"],
                ratio=float(record["ratio"]),
                split=record["split"],
                psnr_db=float(record["psnr_db"]),
                ssim=float(record["ssim"]),
                wall_time_s=float(record["wall_time_s"]),
                seed=int(record["seed"]),
            ))
    return rows


def parse_gap_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for record in reader:
            rows.append(GapRow(
                method=record["method"],
                sample_level=record["sample_level"],
                ratio=float(record["ratio"]),
                psnr_given=float(record["psnr_given"]),
                psnr_unseen=float(record["psnr_unseen"]),
                delta_psnr=float(record["delta_psnr"]),
                ssim_given=float(record["ssim_given"]),
                ssim_unseen=float(record["ssim_unseen"]),
                delta_ssim=float(record["delta_ssim"]),
            ))
    return rows


def stabilize_rows(rows):
    """Zero the wall-time fields so reruns produce byte-identical reports;
    measured timings go to the timings sidecar instead."""
    out = []
    for row in rows:
        if isinstance(row, ResultRow):
            out.append(ResultRow(row.dataset, row.method, row.ratio, row.split,
                                 row.psnr_db, row.ssim, 0.0, row.seed, row.error))
        else:
            out.append(row)
    return out


def write_timings(rows, path):
    lines = ["dataset,method,ratio,split,wall_time_s"]
    for row in rows:
        if isinstance(row, ResultRow):
            lines.append(
                f"{row.dataset},{row.method},{row.ratio},{row.split},{row.wall_time_s:.3f}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def dump_images(clean, corrupted, restored, out_dir, count):
    """Write the first `count` (clean, corrupted, restored) column triples as
    PGM (grayscale) or PPM (color) files named {index}_{kind}.{ext}."""
    for other in (corrupted, restored):
        if other.images.shape != clean.images.shape:
            raise ValueError("image sets must share one shape")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "pgm" if clean.channels == 1 else "ppm"
    written = []
    for index in range(min(count, clean.count)):
        for kind, imageset in (("clean", clean), ("corrupted", corrupted),
                               ("restored", restored)):
            path = out / f"{index}_{kind}.{ext}"
            data.write_image(path, imageset, index)
            written.append(path)
    return written
