"""hiersphere: metric learning for two-level (class x polarity) label hierarchies.

Trains unit-sphere sentence/feature embeddings in two stages -- adaptive
cosine sub-class classification, then thresholded pairwise cosine
fine-tuning -- and scores polarity against sub-class centroids. Ships with
synthetic data generation, TF-IDF dedup, MDS visualization, and a CLI.
"""

from .data import (
    Dataset,
    DedupRecord,
    GeneratorConfig,
    Sample,
    generate_synthetic,
    load_jsonl,
    save_jsonl,
    subclass_means,
    tfidf_dedup,
)
from .encoder import (
    EncoderConfig,
    EncoderParams,
    OptimizerConfig,
    encoder_forward,
    encoder_forward_batch,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .errors import (
    AsymmetricInputError,
    BatchTooSmallError,
    DataError,
    DatasetTooSmallError,
    DegenerateDistancesError,
    DimensionMismatchError,
    EmptyCorpusError,
    HiersphereError,
    IndexOutOfRangeError,
    InvalidClassCountError,
    InvalidConfigError,
    MissingSubclassError,
    NonFiniteError,
    NoTestLabelsError,
    NoValidTripletsError,
    NumericError,
    ParseError,
    UnknownPolarityError,
    ZeroNormError,
)
from .evaluate import (
    MaeReport,
    SubclassCentroids,
    class_score,
    compute_centroids,
    embed_all,
    format_mae_table,
    mae_report,
    predict_all,
)
from .labels import HierLabel, Polarity
from .losses import (
    AdaCosState,
    LossOutput,
    PairTarget,
    adacos_init_scale,
    adacos_loss,
    adacos_update_scale,
    angular_margin_loss,
    margin_logit_transform,
    pair_target,
    pair_target_matrix,
    pairwise_cosine_loss,
    softmax_ce_loss,
    triplet_loss,
)
from .rng import make_rng
from .trainer import (
    TrainConfig,
    TrainReport,
    make_batches,
    train_baseline,
    train_stage1,
    train_stage2,
    train_two_stage,
    triplet_batch_loss,
)
from .vecmath import GradCheckReport, cosine_sim, grad_check, unit_normalize
from .viz import Mds2D, classical_mds, emit_svg_scatter

__version__ = "0.1.0"

__all__ = [
    "AdaCosState",
    "AsymmetricInputError",
    "BatchTooSmallError",
    "DataError",
    "Dataset",
    "DatasetTooSmallError",
    "DedupRecord",
    "DegenerateDistancesError",
    "DimensionMismatchError",
    "EmptyCorpusError",
    "EncoderConfig",
    "EncoderParams",
    "GeneratorConfig",
    "GradCheckReport",
    "HierLabel",
    "HiersphereError",
    "IndexOutOfRangeError",
    "InvalidClassCountError",
    "InvalidConfigError",
    "LossOutput",
    "MaeReport",
    "Mds2D",
    "MissingSubclassError",
    "NonFiniteError",
    "NoTestLabelsError",
    "NoValidTripletsError",
    "NumericError",
    "OptimizerConfig",
    "PairTarget",
    "ParseError",
    "Polarity",
    "Sample",
    "SubclassCentroids",
    "TrainConfig",
    "TrainReport",
    "UnknownPolarityError",
    "ZeroNormError",
    "adacos_init_scale",
    "adacos_loss",
    "adacos_update_scale",
    "angular_margin_loss",
    "class_score",
    "classical_mds",
    "compute_centroids",
    "cosine_sim",
    "embed_all",
    "emit_svg_scatter",
    "encoder_forward",
    "encoder_forward_batch",
    "format_mae_table",
    "generate_synthetic",
    "grad_check",
    "init_params",
    "load_checkpoint",
    "load_jsonl",
    "mae_report",
    "make_batches",
    "make_rng",
    "margin_logit_transform",
    "pair_target",
    "pair_target_matrix",
    "pairwise_cosine_loss",
    "predict_all",
    "save_checkpoint",
    "save_jsonl",
    "softmax_ce_loss",
    "subclass_means",
    "tfidf_dedup",
    "train_baseline",
    "train_stage1",
    "train_stage2",
    "train_two_stage",
    "triplet_batch_loss",
    "triplet_loss",
    "unit_normalize",
]
