"""Command-line entry points for the experiment harness.

Exit codes: 0 success, 1 any per-row/solver failure, 2 configuration errors.
"""

import argparse
import json
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import baselines, data, harness, metrics, numkit
from .harness import ConfigError, ExperimentConfig, TrainedModel


def _ratio_tag(ratio):
    return ("%g" % ratio).replace(".", "p")


def _add_common(sub):
    sub.add_argument("--config", help="experiment config JSON")
    sub.add_argument("--seed", type=int, default=None, help="override config seed")
    sub.add_argument("--out", default=None, help="override config output_dir")
    sub.add_argument("--long", action="store_true", help="full-scale sample counts")
    sub.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def _load_config(args):
    if not args.config:
        raise ConfigError("--config is required for this command")
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.output_dir = args.out
    if args.long:
        config.apply_long()
    return config


@contextmanager
def _mapper(jobs):
    if jobs <= 1:
        yield None
        return
    import multiprocessing as mp

    pool = mp.get_context("fork").Pool(processes=jobs)
    try:
        yield pool.map
    finally:
        pool.close()
        pool.join()


def _write_reports(rows, config, out_dir, stem):
    out_dir.mkdir(parents=True, exist_ok=True)
    harness.write_timings(rows, out_dir / f"timings_{stem}.csv")
    to_write = harness.stabilize_rows(rows) if config.stable_report else rows
    harness.report(to_write, "csv", out_dir / f"results_{stem}.csv")
    harness.report(to_write, "markdown", out_dir / f"results_{stem}.md")


def _save_models(outcomes, config, out_dir):
    for (method, ratio_index), outcome in sorted(outcomes.items()):
        if outcome is None:
            continue
        tag = _ratio_tag(config.corruption_ratios[ratio_index])
        if outcome.model is not None:
            outcome.model.save(out_dir / f"model_{method}_r{tag}.bin")
        if outcome.report is not None:
            outcome.report.save(out_dir / f"solve_{method}_r{tag}.json")


def _dump_cells(config, dataset, outcomes, out_dir):
    if config.dump_count <= 0:
        return
    given, _ = harness.partition(config, dataset)
    for ratio_index, ratio in enumerate(config.corruption_ratios):
        spec = harness._corruption_spec(config, ratio_index, "given")
        corrupted = data.corrupt(given, spec)
        for method in config.methods:
            outcome = outcomes.get((method, ratio_index))
            if outcome is None:
                continue
            restored = given.with_images(np.clip(outcome.restored, 0.0, 1.0))
            harness.dump_images(
                given, corrupted.corrupted, restored,
                out_dir / "images" / f"{method}_r{_ratio_tag(ratio)}",
                config.dump_count,
            )


def _exit_for_rows(rows):
    failures = [row for row in rows if getattr(row, "error", "")]
    for row in failures:
        print(f"row failed: {row.method} ratio={row.ratio} split={row.split}: "
              f"{row.error}", file=sys.stderr)
    return 1 if failures else 0


def cmd_corrupt(args):
    config = _load_config(args)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = harness.load_dataset(config)
    for ratio_index, ratio in enumerate(config.corruption_ratios):
        spec = harness._corruption_spec(config, ratio_index, "given")
        corrupted = data.corrupt(dataset, spec)
        corrupted.save(out_dir / f"corrupted_r{_ratio_tag(ratio)}")
        print(f"wrote corrupted_r{_ratio_tag(ratio)} ({dataset.count} images, "
              f"ratio {ratio})")
    return 0


def cmd_train(args):
    config = _load_config(args)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = harness.load_dataset(config)
    given, _ = harness.partition(config, dataset)
    failures = 0
    for ratio_index, ratio in enumerate(config.corruption_ratios):
        spec = harness._corruption_spec(config, ratio_index, "given")
        corrupted = data.corrupt(given, spec)
        for method in config.methods:
            if method not in harness.GENERALIZABLE:
                print(f"skipping {method}: no reusable forward model", file=sys.stderr)
                continue
            seed = harness._cell_seed(config, ratio_index, method)
            params = harness.method_defaults(method, given.pixels, config)
            try:
                outcome = harness.train_method(
                    method, corrupted.corrupted.images, params, seed
                )
            except Exception as exc:
                print(f"train failed for {method} ratio={ratio}: {exc}", file=sys.stderr)
                failures += 1
                continue
            tag = _ratio_tag(ratio)
            outcome.model.save(out_dir / f"model_{method}_r{tag}.bin")
            if outcome.report is not None:
                outcome.report.save(out_dir / f"solve_{method}_r{tag}.json")
            print(f"trained {method} at ratio {ratio} -> model_{method}_r{tag}.bin")
    return 1 if failures else 0


def cmd_denoise(args):
    model = TrainedModel.load(args.model)
    in_path = Path(args.input)
    clean = None
    geometry = None
    if in_path.is_dir():
        corrupted_set = data.CorruptedDataset.load(in_path)
        matrix = corrupted_set.corrupted.images
        geometry = corrupted_set.corrupted
        clean = corrupted_set.clean
    else:
        matrix = numkit.read_rmat(in_path)
    restored = np.clip(model.apply(matrix), 0.0, 1.0)
    out_dir = Path(args.out or "denoised")
    out_dir.mkdir(parents=True, exist_ok=True)
    numkit.write_rmat(out_dir / "restored.rmat", restored)
    print(f"wrote {out_dir / 'restored.rmat'} ({restored.shape[1]} images)")
    if geometry is not None and args.dump > 0:
        restored_set = geometry.with_images(restored)
        harness.dump_images(
            clean if clean is not None else restored_set,
            geometry, restored_set, out_dir / "images", args.dump,
        )
    if clean is not None:
        report = metrics.evaluate(clean, clean.with_images(restored))
        print(f"psnr_db={report.psnr_db:.2f} ssim={report.ssim:.4f}")
    return 0


def cmd_eval(args):
    restored = numkit.read_rmat(args.restored)
    clean = numkit.read_rmat(args.clean)
    height = args.height or restored.shape[0]
    width = args.width or 1
    channels = args.channels
    restored_set = data.ImageSet(restored, height, width, channels)
    clean_set = data.ImageSet(clean, height, width, channels)
    report = metrics.evaluate(clean_set, restored_set)
    text = report.to_json()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_collective(args):
    config = _load_config(args)
    out_dir = Path(config.output_dir)
    dataset = harness.load_dataset(config)
    with _mapper(args.jobs) as pmap:
        rows, outcomes = harness.run_collective(config, dataset=dataset,
                                                parallel_map=pmap)
    _write_reports(rows, config, out_dir, "given")
    _save_models(outcomes, config, out_dir)
    _dump_cells(config, dataset, outcomes, out_dir)
    print(harness.report(harness.stabilize_rows(rows), "markdown"))
    return _exit_for_rows(rows)


def cmd_generalize(args):
    config = _load_config(args)
    out_dir = Path(config.output_dir)
    dataset = harness.load_dataset(config)
    with _mapper(args.jobs) as pmap:
        given_rows, outcomes = harness.run_collective(config, dataset=dataset,
                                                      parallel_map=pmap)
    unseen_rows = harness.run_generalization(config, dataset=dataset,
                                             outcomes=outcomes)
    _write_reports(given_rows, config, out_dir, "given")
    if unseen_rows:
        _write_reports(unseen_rows, config, out_dir, "unseen")
    _save_models(outcomes, config, out_dir)
    print(harness.report(harness.stabilize_rows(given_rows + unseen_rows), "markdown"))
    return _exit_for_rows(given_rows + unseen_rows)


def cmd_sample_size(args):
    config = _load_config(args)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gaps = harness.run_sample_size(config)
    harness.report(gaps, "csv", out_dir / "gaps.csv")
    harness.report(gaps, "markdown", out_dir / "gaps.md")
    print(harness.report(gaps, "markdown"))
    return 0


def cmd_demo_rpca(args):
    seed = args.seed if args.seed is not None else 0
    clean, sparse, observed = baselines.synthetic_rpca_instance(seed=seed)
    low_rank, sparse_est, report = baselines.rpca_admm(observed)
    err = float(np.linalg.norm(low_rank - clean) / np.linalg.norm(clean))
    support_true = np.abs(sparse) > 1e-3
    support_est = np.abs(sparse_est) > 1e-3
    exact_support = bool(np.array_equal(support_true, support_est))
    summary = {
        "relative_error": err,
        "support_exact": exact_support,
        "iterations": report.iterations,
        "converged": report.converged,
        "seed": seed,
    }
    print(json.dumps(summary, sort_keys=True))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        numkit.write_rmat(out_dir / "low_rank.rmat", low_rank)
        numkit.write_rmat(out_dir / "sparse.rmat", sparse_est)
        report.save(out_dir / "solve.json")
        (out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True) + "\n")
    return 0 if (err < 1e-4 and exact_support) else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robustae",
        description="Robust autoencoder / RPCA corruption-removal harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    commands = {
        "corrupt": (cmd_corrupt, "corrupt the configured dataset and dump it"),
        "train": (cmd_train, "train forward-pass methods, write model files"),
        "collective": (cmd_collective, "collective corruption-removal pipeline"),
        "generalize": (cmd_generalize, "collective + unseen-split evaluation"),
        "sample-size": (cmd_sample_size, "sample-size study with generalization gaps"),
    }
    for name, (func, help_text) in commands.items():
        sp = sub.add_parser(name, help=help_text)
        _add_common(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("denoise", help="apply a trained model to corrupted images")
    sp.add_argument("--model", required=True, help="model file from train/collective")
    sp.add_argument("--input", required=True, help="RMAT matrix or corrupted-dataset dir")
    sp.add_argument("--out", default=None)
    sp.add_argument("--dump", type=int, default=0, help="also write N PGM/PPM triples")
    sp.set_defaults(func=cmd_denoise)

    sp = sub.add_parser("eval", help="PSNR/SSIM of restored vs clean RMAT matrices")
    sp.add_argument("--restored", required=True)
    sp.add_argument("--clean", required=True)
    sp.add_argument("--height", type=int, default=None)
    sp.add_argument("--width", type=int, default=None)
    sp.add_argument("--channels", type=int, default=1)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("demo-rpca", help="synthetic low-rank + sparse exact recovery")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_demo_rpca)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: missing file: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
