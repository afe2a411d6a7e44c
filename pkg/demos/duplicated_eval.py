"""
Duplicated evaluation sets and windowed scores
==============================================

Repeating a test sentence k times pushes later copies into absolute positions
the model may never have trained on. Scoring each copy separately turns one
test set into a position probe: F1(1) is the familiar score, F1(k) tells you
what happens far from the start.
"""

from posbias.corpus import Task
from posbias.duplication import build_eval_set, duplicate_sentence
from posbias.metrics import aggregate_over_k, windowed_scores
from posbias.toytagger import SynthConfig, generate_synthetic_corpus

_, test_ds = generate_synthetic_corpus(SynthConfig(n_train=10, n_test=150, seed=3))

# one sentence, three copies: positions keep counting across [SEP]s
s = test_ds.sentences[0]
dup = duplicate_sentence(s, k=3, max_len=256)
print(f"sentence {s.id!r}, {s.length} tokens, duplicated with k=3:")
print("  surfaces:", " ".join(dup.surfaces[:10]), "...")
print("  copy spans:", dup.copy_spans)
print("  last position id:", dup.position_ids[-1])

# a whole eval set: every test sentence at k=5
es = build_eval_set(test_ds, k=5, max_len=256)
print(f"\neval set: k={es.k}, {len(es.sequences)} sequences")

# gold as its own prediction scores 1.0 in every window
gold = [list(seq.labels) for seq in es.sequences]
for alpha in (1, 3, 5):
    print(f"  gold F1({alpha}) = {windowed_scores(es, gold, alpha, Task.NER_BIO).f1:.3f}")

# now corrupt only the LAST copy of each sequence and watch the windows react
corrupted = []
for seq in es.sequences:
    row = list(seq.labels)
    start, end = seq.copy_spans[-1]
    row[start : end + 1] = ["O"] * (end - start + 1)
    corrupted.append(row)
print("\npredictions wrong only in copy 5:")
for alpha in (1, 4, 5):
    score = windowed_scores(es, corrupted, alpha, Task.NER_BIO)
    print(f"  F1({alpha}) = {score.f1:.3f}  (recall {score.recall:.3f})")

# aggregation across k: mean and spread of F1(alpha) over eval sets k >= alpha
results = {}
for k in range(2, 6):
    es_k = build_eval_set(test_ds, k, max_len=256)
    gold_k = [list(seq.labels) for seq in es_k.sequences]
    for alpha in range(1, k + 1):
        results[(k, alpha)] = windowed_scores(es_k, gold_k, alpha, Task.NER_BIO)
report = aggregate_over_k(results, alpha=2, k_range=range(2, 6))
print(
    f"\ngold F1(2) aggregated over k={report.k_values}: "
    f"{report.mean_f1:.3f} +/- {report.std_f1:.3f}"
)
