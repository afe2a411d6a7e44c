"""
Position bias, end to end
=========================

The full pipeline at reduced scale: generate a skewed corpus, train small
taggers with and without the batch transforms, evaluate on duplicated test
sets, and merge the comparison table. Training sentences never exceed 25
tokens, so a baseline model only ever updates the first couple dozen rows
of its position table; copy 10 of a duplicated sequence then lands on rows
it has never seen. Takes well under a minute on a laptop.
"""

import csv
import shutil
import sys
from pathlib import Path

from posbias.cli import main
from posbias.corpus import write_dataset
from posbias.toytagger import SynthConfig, generate_synthetic_corpus

out = Path("demo_out/bias_pipeline")
if out.exists():
    shutil.rmtree(out)
out.mkdir(parents=True)


def run(*argv):
    print("$ posbias", " ".join(argv))
    code = main(list(argv))
    if code != 0:
        sys.exit(code)


# a corpus whose entity surface forms are mostly unique: recognizing them at
# test time must lean on corpus regularities, not memorized tokens
sc = SynthConfig(
    n_train=4000,
    n_test=400,
    entity_vocab_sizes={"ENT": 5000},
    entity_len_range=(1, 1),
    seed=1234,
)
train_ds, test_ds = generate_synthetic_corpus(sc)
write_dataset(train_ds, out / "train.jsonl")
write_dataset(test_ds, out / "test.jsonl")
print(f"corpus: {len(train_ds.sentences)} train / {len(test_ds.sentences)} test\n")

# duplicated eval sets: the plain test set (k=1) and a ten-copy variant
run("duplicate", str(out / "test.jsonl"), "--k", "1",
    "--max-len", "256", "--out", str(out / "dup"))
run("duplicate", str(out / "test.jsonl"), "--k", "10",
    "--max-len", "256", "--out", str(out / "dup"))

# three training regimes, two seeds each
common = ["--no-quantile-subset", "--max-len", "256", "--d-model", "16",
          "--epochs", "5", "--lr", "1.0", "--no-attention",
          "--seeds", "23456", "34567"]
run("train", str(out / "train.jsonl"), "--transform", "none",
    "--out", str(out / "run_none"), *common)
run("train", str(out / "train.jsonl"), "--transform", "rpp",
    "--rpp-lower-bound", "1", "--out", str(out / "run_rpp"), *common)
run("train", str(out / "train.jsonl"), "--transform", "cp",
    "--out", str(out / "run_cp"), *common)

# windowed scores per regime
for regime in ("none", "rpp", "cp"):
    models = sorted(str(p) for p in (out / f"run_{regime}").glob("model_seed*.npz"))
    run("evaluate", "--eval-dir", str(out / "dup"), "--model", *models,
        "--out", str(out / f"eval_{regime}"))

# one merged table
run("report", f"baseline={out / 'eval_none'}", f"rpp={out / 'eval_rpp'}",
    f"cp={out / 'eval_cp'}", "--out", str(out / "report"))

print("\nmerged report (f1 = plain score, f1_10 = tenth copy):")
with open(out / "report" / "report.csv", newline="", encoding="utf-8") as fp:
    for row in csv.DictReader(fp):
        print(
            f"  {row['regime']:<9} F1={float(row['f1']):.3f} "
            f"F1(5)={float(row['f1_5']):.3f} F1(10)={float(row['f1_10']):.3f}"
        )

print(
    "\nthe baseline collapses on the tenth copy; both transforms hold their"
    "\nscore there without giving up anything on the plain test set."
)
