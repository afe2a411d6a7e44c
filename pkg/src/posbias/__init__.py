"""Position-bias analysis and mitigation for token classification.

The package covers the full loop: corpus statistics that reveal skewed
position distributions, duplicated evaluation sets that probe tokens at
positions rare in training, windowed scoring restricted to individual copies,
training-time transforms that reshape the position distribution, and a small
fully inspectable tagger to demonstrate the effect end to end.
"""

from .corpus import (
    CLS_TOKEN,
    IGNORE_LABEL,
    SEP_TOKEN,
    Dataset,
    ParseError,
    Sentence,
    Split,
    Task,
    Token,
    parse_conll2003,
    parse_conllu,
    parse_jsonl,
    read_dataset,
    serialize_dataset,
    write_dataset,
)
from .duplication import (
    DuplicatedSequence,
    EvalSet,
    build_eval_set,
    duplicate_sentence,
    read_eval_set,
    write_eval_set,
)
from .metrics import (
    Chunk,
    Scores,
    WindowedReport,
    aggregate_over_k,
    chunk_prf,
    extract_chunks,
    token_accuracy_scores,
    windowed_scores,
)
from .stats import (
    Histogram,
    LengthSummary,
    class_position_distribution,
    length_histogram,
    length_summary,
    quantile_subset,
)
from .transforms import (
    CpPlan,
    EncodedBatch,
    EncodedSequence,
    RppDraw,
    cp_partition,
    cp_perturb,
    encode_for_training,
    rpp_shift,
)
from .toytagger import (
    Model,
    ModelConfig,
    SynthConfig,
    TrainAudit,
    finite_difference_check,
    generate_synthetic_corpus,
    load_model,
    predict,
    predict_batch,
    save_model,
    train,
)

__version__ = "0.1.0"
