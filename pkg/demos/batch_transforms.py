"""
Training-time batch transforms
==============================

Two ways to make a model see late positions during training without new data.
The random position shift keeps each sequence intact but moves its position
ids to a random offset. The context perturbation concatenates batch members
in random orders, so real tokens land at late positions with real context.
Both are pure functions of (batch, seed).
"""

from posbias.corpus import Sentence, Token
from posbias.transforms import (
    EncodedBatch,
    cp_perturb,
    encode_for_training,
    rpp_shift,
)


def make_sentence(sid, words):
    return Sentence(
        id=sid, tokens=tuple(Token(surface=w, label="O") for w in words)
    )


MAX_LEN = 64
seqs = tuple(
    encode_for_training(make_sentence(f"s{i}", [f"{chr(97 + i)}{j}" for j in range(n)]), MAX_LEN)
    for i, n in enumerate([4, 6, 3])
)
batch = EncodedBatch(sequences=seqs, max_len=MAX_LEN, seed=0)

print("original position ids:")
for seq in batch.sequences:
    print(f"  {' '.join(seq.surfaces):<40} -> {seq.position_ids}")

# ---------------------------------------------------------------------------
# random position shift: same tokens, new start position per sequence

shifted, draws = rpp_shift(batch, rng_seed=42, lower_bound=1)
print("\nafter the random shift (seed 42):")
for seq, draw in zip(shifted.sequences, draws):
    print(f"  start drawn from {draw.interval}: p_r={draw.p_r}, tau={draw.tau}")
    print(f"    -> {seq.position_ids}")

# the same seed reproduces the same draws, bit for bit
again, _ = rpp_shift(batch, rng_seed=42, lower_bound=1)
print("\nsame seed, same result:", shifted == again)

# ---------------------------------------------------------------------------
# context perturbation: pack, then emit every subset in distinct random orders

perturbed, plan = cp_perturb(batch, rng_seed=42)
print(f"\npacking plan (capacity {MAX_LEN}): subsets = {plan.subsets}")
print(f"orders used: {plan.permutations}")
print("concatenated outputs:")
for seq in perturbed.sequences:
    print(f"  {' '.join(seq.surfaces)}")
print("output batch size equals input batch size:",
      len(perturbed.sequences) == len(batch.sequences))
