"""Online sub-batch selection for parallel-corpus fine-tuning pipelines.

Scores sentence pairs by how learnable they look (reference-model
similarity, weighted against current learner similarity), selects
sub-batches jointly so that picks condition on each other, caches
reference embeddings on disk, and accounts for the modeled FLOPS of each
selection regime.
"""
from .core import (
    ConflictingVector,
    CorruptShard,
    DegenerateConfig,
    DimensionMismatch,
    EmbeddingMatrix,
    EncodingError,
    KTooLarge,
    LearnabilityMatrix,
    LearnselError,
    MissingEmbedding,
    MissingLabel,
    ModelMismatch,
    PairRecord,
    ScoreWeights,
    SelectionConfig,
    SelectionResult,
    Side,
    UnknownId,
    UnreadableFile,
    ValueOutOfRange,
    ZeroVectorRow,
    content_hash,
    normalize_rows,
)
from .scoring import (
    ScoreHistogram,
    SimilarityMatrix,
    easy_reference_scores,
    hard_learner_scores,
    learnability_matrix,
    score_histogram,
    similarity_matrix,
)
from .selector import (
    SampledMask,
    conditional_scores,
    gumbel_topk,
    iid_select,
    joint_select,
    n_draws,
    topk_individual_select,
)

__version__ = "0.1.0"
