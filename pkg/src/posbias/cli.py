"""Command-line front end.

Subcommands mirror the analysis pipeline: stats, duplicate, perturb, train,
evaluate, report. Every run is deterministic given its flags; re-running a
command overwrites its artifacts with byte-identical content. Log verbosity
comes from the POSBIAS_LOG environment variable (DEBUG, INFO, ...).
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean, stdev

from . import corpus, duplication, metrics, stats, toytagger, transforms

logger = logging.getLogger(__name__)

EVAL_SET_PATTERN = "eval_k{k}.jsonl"


class CliError(Exception):
    """User-facing failure: message only, no traceback."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    inputs: tuple[str, ...] = ()
    format: str = "jsonl"
    split: str = "train"
    k: int | None = None
    k_range: tuple[int, int] | None = None
    alphas: tuple[int, ...] = ()
    max_len: int = 512
    seed: int = 0
    seeds: tuple[int, ...] = toytagger.DEFAULT_SEEDS
    transform: str = "none"
    rpp_lower_bound: int | None = None
    out: str = "."
    svg: bool = False
    audit: str | None = None
    quantile_subset: bool = True
    bin_width: int = 1
    label: str | None = None
    d_model: int = 32
    epochs: int = 5
    learning_rate: float = 1e-3
    batch_size: int = 16
    eval_batch_size: int = 64
    use_attention: bool = True
    models: tuple[str, ...] = ()
    preds: tuple[str, ...] = ()
    eval_dir: str | None = None
    regimes: tuple[tuple[str, str], ...] = ()


def _float_repr(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_float_repr(v) for v in row])
    logger.info("wrote %s", path)


def _read_inputs(cfg: RunConfig) -> corpus.Dataset:
    if not cfg.inputs:
        raise CliError("no input files given")
    datasets = [
        corpus.read_dataset(
            p, cfg.format, name=Path(p).stem, split=corpus.Split(cfg.split)
        )
        for p in cfg.inputs
    ]
    if len(datasets) == 1:
        return datasets[0]
    merged = []
    for fi, ds in enumerate(datasets):
        for s in ds.sentences:
            merged.append(corpus.Sentence(id=f"f{fi}-{s.id}", tokens=s.tokens))
    return corpus.Dataset(
        name=datasets[0].name,
        split=datasets[0].split,
        sentences=tuple(merged),
        task=datasets[0].task,
    )


def _ks(cfg: RunConfig) -> list[int]:
    if cfg.k is not None and cfg.k_range is not None:
        raise CliError("give either --k or --k-range, not both")
    if cfg.k is not None:
        return [cfg.k]
    if cfg.k_range is not None:
        lo, hi = cfg.k_range
        if lo > hi:
            raise CliError(f"empty k range {lo}..{hi}")
        return list(range(lo, hi + 1))
    return []


def _plt():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise CliError("--svg needs matplotlib (pip install posbias[plots])") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # keep SVG output free of per-run ids and dates so reruns are byte-identical
    matplotlib.rcParams["svg.hashsalt"] = "posbias"
    return plt


def _save_svg(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    logger.info("wrote %s", path)


# ---------------------------------------------------------------------------
# handlers

def _cmd_stats(cfg: RunConfig) -> None:
    ds = _read_inputs(cfg)
    out = Path(cfg.out)
    summary = stats.length_summary(ds)
    _write_csv(
        out / "summary.csv",
        ["dataset", "n", "share_le_25", "share_ge_50", "q1", "q3"],
        [[ds.name, summary.n_sequences, summary.share_le_25, summary.share_ge_50,
          summary.q1, summary.q3]],
    )
    rows: list[list] = []
    length_hist = stats.rebin(stats.length_histogram(ds), cfg.bin_width)
    for edge, count in zip(length_hist.bin_edges, length_hist.counts):
        rows.append(["length", "", edge, count])
    class_labels = (
        sorted(stats.entity_types(ds))
        if ds.task is corpus.Task.NER_BIO
        else sorted(ds.label_inventory)
    )
    class_hists = {}
    for lab in class_labels:
        hist = stats.rebin(stats.class_position_distribution(ds, lab), cfg.bin_width)
        class_hists[lab] = hist
        for edge, count in zip(hist.bin_edges, hist.counts):
            rows.append(["class_position", lab, edge, count])
    _write_csv(out / "histograms.csv", ["metric", "label", "bin", "count"], rows)
    if cfg.svg:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.bar(length_hist.bin_edges, length_hist.counts, width=cfg.bin_width * 0.9)
        ax.set_xlabel("sequence length")
        ax.set_ylabel("count")
        ax.set_title(f"{ds.name}: sequence lengths")
        _save_svg(fig, out / "length_histogram.svg")
        plt.close(fig)
        fig, ax = plt.subplots(figsize=(7, 4))
        for lab, hist in class_hists.items():
            ax.plot(hist.bin_edges, hist.counts, label=lab)
        ax.set_xlabel("token position (1-based)")
        ax.set_ylabel("count")
        ax.set_title(f"{ds.name}: class positions")
        if class_hists:
            ax.legend(fontsize="small", ncol=2)
        _save_svg(fig, out / "class_positions.svg")
        plt.close(fig)


def _cmd_duplicate(cfg: RunConfig) -> None:
    ks = _ks(cfg)
    if not ks:
        raise CliError("duplicate needs --k or --k-range")
    ds = _read_inputs(cfg)
    if cfg.quantile_subset:
        ds = stats.quantile_subset(ds)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in ks:
        es = duplication.build_eval_set(ds, k, cfg.max_len)
        duplication.write_eval_set(es, out / EVAL_SET_PATTERN.format(k=k))
        logger.info("k=%d: %d sequences", k, len(es.sequences))


def _cmd_perturb(cfg: RunConfig) -> None:
    if len(cfg.inputs) != 1:
        raise CliError("perturb takes exactly one batch file")
    with open(cfg.inputs[0], "r", encoding="utf-8", errors="strict") as fp:
        batches = transforms.parse_batches(fp, max_len=cfg.max_len, seed=cfg.seed)
    outputs = []
    audits = []
    for batch in batches:
        result, audit = transforms.apply_transform(
            batch, cfg.transform, cfg.seed, rpp_lower_bound=cfg.rpp_lower_bound
        )
        outputs.append(result)
        audits.append(audit)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fp:
        for line in transforms.serialize_batches(outputs):
            fp.write(line + "\n")
    logger.info("wrote %s", out)
    if cfg.audit:
        audit_path = Path(cfg.audit)
        audit_path.parent.mkdir(parents=True, exist_ok=True)
        with open(audit_path, "w", encoding="utf-8") as fp:
            for line in transforms.audit_records(cfg.transform, audits):
                fp.write(line + "\n")
        logger.info("wrote %s", audit_path)


def _model_config(cfg: RunConfig, seed: int) -> toytagger.ModelConfig:
    return toytagger.ModelConfig(
        d_model=cfg.d_model,
        max_positions=cfg.max_len,
        use_attention=cfg.use_attention,
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        seed=seed,
        batch_size=cfg.batch_size,
        eval_batch_size=cfg.eval_batch_size,
    )


def _cmd_train(cfg: RunConfig) -> None:
    ds = _read_inputs(cfg)
    if cfg.quantile_subset:
        ds = stats.quantile_subset(ds)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        audit = toytagger.TrainAudit()
        model = toytagger.train(
            _model_config(cfg, seed),
            ds,
            transform=cfg.transform,
            rpp_lower_bound=cfg.rpp_lower_bound,
            audit=audit,
        )
        toytagger.save_model(model, out / f"model_seed{seed}.npz")
        n_batches = len(audit.losses) // max(1, cfg.epochs)
        rows = [
            [li // n_batches, li % n_batches, loss]
            for li, loss in enumerate(audit.losses)
        ]
        _write_csv(out / f"loss_seed{seed}.csv", ["epoch", "batch", "loss"], rows)
        logger.info("seed %d: final epoch mean loss %.6f", seed, audit.epoch_means[-1])


def _eval_set_paths(cfg: RunConfig) -> dict[int, str]:
    """Map duplication factor -> eval set file, from --eval-dir or inputs."""
    paths: dict[int, str] = {}
    if cfg.eval_dir:
        for p in sorted(glob.glob(str(Path(cfg.eval_dir) / "eval_k*.jsonl"))):
            m = re.search(r"eval_k(\d+)\.jsonl$", p)
            if m:
                paths[int(m.group(1))] = p
    for p in cfg.inputs:
        m = re.search(r"eval_k(\d+)\.jsonl$", p)
        if not m:
            raise CliError(f"cannot infer k from file name {p!r} (want eval_k<K>.jsonl)")
        paths[int(m.group(1))] = p
    wanted = _ks(cfg)
    if wanted:
        missing = [k for k in wanted if k not in paths]
        if missing:
            raise CliError(f"no eval set file for k={missing}")
        paths = {k: paths[k] for k in wanted}
    if not paths:
        raise CliError("evaluate needs eval set files (--eval-dir or positional inputs)")
    return paths


def _grid_scores(cfg: RunConfig, eval_sets: dict[int, duplication.EvalSet]):
    """Rows of (run_id, k, alpha, Scores) for every model or prediction source."""
    some_set = next(iter(eval_sets.values()))
    task = corpus.infer_task(
        lab for seq in some_set.sequences for lab in seq.labels if lab != corpus.IGNORE_LABEL
    )
    rows = []
    if cfg.models:
        sources = [(str(p), toytagger.load_model(p)) for p in cfg.models]
        for name, model in sources:
            run_id = model.config.seed
            for k, es in sorted(eval_sets.items()):
                preds = toytagger.predict_batch(model, es.sequences)
                for alpha in _alphas(cfg, k):
                    s = metrics.windowed_scores(es, preds, alpha, task, label=cfg.label)
                    rows.append((run_id, k, alpha, s))
    elif cfg.preds:
        if len(cfg.preds) != len(eval_sets):
            raise CliError(
                f"{len(eval_sets)} eval sets but {len(cfg.preds)} prediction files"
            )
        for pred_path, (k, es) in zip(cfg.preds, sorted(eval_sets.items())):
            preds = duplication.read_predictions(pred_path, es)
            for alpha in _alphas(cfg, k):
                s = metrics.windowed_scores(es, preds, alpha, task, label=cfg.label)
                rows.append((0, k, alpha, s))
    else:
        raise CliError("evaluate needs --model checkpoints or --preds files")
    return rows


def _alphas(cfg: RunConfig, k: int) -> list[int]:
    if cfg.alphas:
        return [a for a in cfg.alphas if a <= k]
    return list(range(1, k + 1))


def _cmd_evaluate(cfg: RunConfig) -> None:
    eval_paths = _eval_set_paths(cfg)
    eval_sets = {k: duplication.read_eval_set(p) for k, p in eval_paths.items()}
    rows = _grid_scores(cfg, eval_sets)
    out = Path(cfg.out)
    _write_csv(
        out / "grid.csv",
        ["seed", "k", "alpha", "precision", "recall", "f1", "support"],
        [[r, k, a, s.precision, s.recall, s.f1, s.support] for r, k, a, s in rows],
    )

    by_seed: dict[int, dict[tuple[int, int], metrics.Scores]] = {}
    for run_id, k, alpha, s in rows:
        by_seed.setdefault(run_id, {})[(k, alpha)] = s
    ks_present = sorted({k for _, k, _, _ in rows})
    agg_ks = [k for k in ks_present if k >= 2] or ks_present
    alphas = sorted({a for _, _, a, _ in rows if a <= max(agg_ks)})
    header = ["alpha", "mean_f1", "std_f1", "mean_p", "std_p", "mean_r", "std_r", "n_k"]

    per_seed_reports: dict[int, list[metrics.WindowedReport]] = {}
    for run_id, results in sorted(by_seed.items()):
        reports = []
        for alpha in alphas:
            usable = [k for k in agg_ks if k >= alpha and (k, alpha) in results]
            if not usable:
                continue
            reports.append(metrics.aggregate_over_k(results, alpha, usable))
        per_seed_reports[run_id] = reports
        _write_csv(
            out / f"windowed_seed{run_id}.csv",
            header,
            [
                [r.alpha, r.mean_f1, r.std_f1, r.mean_p, r.std_p, r.mean_r, r.std_r,
                 len(r.k_values)]
                for r in reports
            ],
        )

    # cross-seed summary: mean of per-seed means, sample std across seeds
    summary_rows = []
    for alpha in alphas:
        picked = [
            r for reports in per_seed_reports.values() for r in reports if r.alpha == alpha
        ]
        if not picked:
            continue
        def ms(values):
            return fmean(values), (stdev(values) if len(values) > 1 else 0.0)
        mf, sf = ms([r.mean_f1 for r in picked])
        mp, sp = ms([r.mean_p for r in picked])
        mr, sr = ms([r.mean_r for r in picked])
        summary_rows.append([alpha, mf, sf, mp, sp, mr, sr, len(picked[0].k_values)])
    _write_csv(out / "windowed.csv", header, summary_rows)

    if cfg.svg:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(7, 4))
        xs = [row[0] for row in summary_rows]
        ys = [row[1] for row in summary_rows]
        err = [row[2] for row in summary_rows]
        ax.errorbar(xs, ys, yerr=err, marker="o")
        ax.set_xlabel("copy index alpha")
        ax.set_ylabel("windowed F1")
        _save_svg(fig, out / "windowed.svg")
        plt.close(fig)


def _read_grid(path: Path) -> list[tuple[int, int, int, float]]:
    if not path.exists():
        raise CliError(f"missing grid file {path}")
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fp:
        for rec in csv.DictReader(fp):
            rows.append(
                (int(rec["seed"]), int(rec["k"]), int(rec["alpha"]), float(rec["f1"]))
            )
    return rows


def _regime_summary(grid: list[tuple[int, int, int, float]]):
    """Per regime: plain F1 at k=1 and over-k means at alpha 5 and 10, by seed."""
    seeds = sorted({s for s, _, _, _ in grid})
    out: dict[str, tuple[float, float]] = {}

    def collect(fn) -> list[float]:
        values = []
        for seed in seeds:
            vals = fn(seed)
            if vals:
                values.append(fmean(vals))
        return values

    plain = collect(lambda s: [f1 for s2, k, a, f1 in grid if s2 == s and k == 1 and a == 1])
    if plain:
        out["f1"] = (fmean(plain), stdev(plain) if len(plain) > 1 else 0.0)
    for alpha in (5, 10):
        vals = collect(
            lambda s: [
                f1 for s2, k, a, f1 in grid if s2 == s and a == alpha and k >= max(alpha, 2)
            ]
        )
        if vals:
            out[f"f1_{alpha}"] = (fmean(vals), stdev(vals) if len(vals) > 1 else 0.0)
    return out


def _cmd_report(cfg: RunConfig) -> None:
    if not cfg.regimes:
        raise CliError("report needs regime=path arguments, e.g. baseline=out/eval_base")
    out = Path(cfg.out)
    header = ["regime", "f1", "std_f1", "f1_5", "std_f1_5", "f1_10", "std_f1_10"]
    rows = []
    curves = {}
    for regime, path in cfg.regimes:
        grid = _read_grid(Path(path) / "grid.csv")
        summary = _regime_summary(grid)
        row: list = [regime]
        for key in ("f1", "f1_5", "f1_10"):
            if key in summary:
                row.extend(summary[key])
            else:
                row.extend(["", ""])
        rows.append(row)
        curves[regime] = grid
    _write_csv(out / "report.csv", header, rows)
    if cfg.svg:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(7, 4))
        for regime, grid in curves.items():
            alphas = sorted({a for _, _, a, _ in grid})
            ys = []
            for alpha in alphas:
                vals = [f1 for _, k, a, f1 in grid if a == alpha and k >= max(alpha, 2)]
                ys.append(fmean(vals) if vals else float("nan"))
            ax.plot(alphas, ys, marker="o", label=regime)
        ax.set_xlabel("copy index alpha")
        ax.set_ylabel("windowed F1")
        ax.legend()
        _save_svg(fig, out / "report.svg")
        plt.close(fig)


_HANDLERS = {
    "stats": _cmd_stats,
    "duplicate": _cmd_duplicate,
    "perturb": _cmd_perturb,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}


def run(cfg: RunConfig) -> int:
    """Execute one parsed invocation; returns a process exit status."""
    try:
        _HANDLERS[cfg.command](cfg)
    except KeyError:
        print(f"error: unknown command {cfg.command!r}", file=sys.stderr)
        return 2
    except (CliError, corpus.ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _parse_k_range(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)\.\.(\d+)", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _parse_regime(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected regime=path, got {text!r}")
    name, _, path = text.partition("=")
    return name, path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="posbias",
        description="Analyze and mitigate absolute-position bias in token classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_format=True):
        p.add_argument("--out", default=".", help="output directory or file")
        if with_format:
            p.add_argument("--format", choices=corpus.FORMATS, default="jsonl")
            p.add_argument("--split", choices=[s.value for s in corpus.Split],
                           default="train")

    p = sub.add_parser("stats", help="length shares, quantiles, histograms")
    p.add_argument("inputs", nargs="+")
    add_common(p)
    p.add_argument("--bin-width", type=int, default=1)
    p.add_argument("--svg", action="store_true")

    p = sub.add_parser("duplicate", help="build duplicated eval sets")
    p.add_argument("inputs", nargs="+")
    add_common(p)
    p.add_argument("--k", type=int)
    p.add_argument("--k-range", type=_parse_k_range, metavar="A..B")
    p.add_argument("--max-len", type=int, default=512)
    p.add_argument("--no-quantile-subset", dest="quantile_subset", action="store_false")

    p = sub.add_parser("perturb", help="apply a batch transform to encoded batches")
    p.add_argument("inputs", nargs="+")
    add_common(p, with_format=False)
    p.add_argument("--transform", choices=transforms.TRANSFORMS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-len", type=int, default=512)
    p.add_argument("--rpp-lower-bound", type=int)
    p.add_argument("--audit", metavar="PATH", help="write draw/plan audit JSON lines")

    p = sub.add_parser("train", help="train toy taggers, one per seed")
    p.add_argument("inputs", nargs="+")
    add_common(p)
    p.add_argument("--transform", choices=transforms.TRANSFORMS, default="none")
    p.add_argument("--seeds", type=int, nargs="+", default=list(toytagger.DEFAULT_SEEDS))
    p.add_argument("--max-len", type=int, default=512)
    p.add_argument("--d-model", type=int, default=32)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", dest="learning_rate", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--eval-batch-size", type=int, default=64)
    p.add_argument("--no-attention", dest="use_attention", action="store_false")
    p.add_argument("--rpp-lower-bound", type=int)
    p.add_argument("--no-quantile-subset", dest="quantile_subset", action="store_false")

    p = sub.add_parser("evaluate", help="windowed scores for models or prediction files")
    p.add_argument("inputs", nargs="*", help="eval set files (eval_k<K>.jsonl)")
    add_common(p, with_format=False)
    p.add_argument("--eval-dir", help="directory holding eval_k<K>.jsonl files")
    p.add_argument("--model", dest="models", nargs="+", default=[])
    p.add_argument("--preds", nargs="+", default=[])
    p.add_argument("--k", type=int)
    p.add_argument("--k-range", type=_parse_k_range, metavar="A..B")
    p.add_argument("--alpha", dest="alphas", type=int, nargs="+", default=[])
    p.add_argument("--label", help="restrict scoring to one chunk type or tag")
    p.add_argument("--svg", action="store_true")

    p = sub.add_parser("report", help="merge evaluate outputs across regimes")
    p.add_argument("regimes", nargs="+", type=_parse_regime, metavar="REGIME=DIR")
    add_common(p, with_format=False)
    p.add_argument("--svg", action="store_true")

    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    kwargs = {}
    for name in RunConfig.__dataclass_fields__:
        if hasattr(args, name):
            value = getattr(args, name)
            if isinstance(value, list):
                value = tuple(value)
            kwargs[name] = value
    return RunConfig(**kwargs)


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("POSBIAS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return run(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
