"""Word-level auto-completion for computer-assisted translation.

The pipeline: build a corpus and vocabulary (``corpus``, ``bpe``),
synthesize completion examples (``datagen``), train a backbone with an
optional joint translation objective (``model``, ``training``), predict
and rerank against translation hypotheses (``decoding``, ``agreement``),
and inspect the results (``analysis``).  ``cli`` and ``service`` expose
the whole thing as a command-line tool and an HTTP completion service.
"""

from .corpus import ParallelPair, Vocabulary, build_vocab, load_parallel
from .bpe import BpeModel, bpe_decode, bpe_encode, learn_bpe
from .datagen import (
    GenConfig,
    RomanizationTable,
    WlacExample,
    generate_dataset,
    generate_example,
    make_toy_corpus,
    typing_form,
)
from .model import (
    EncoderInput,
    JointModel,
    ModelConfig,
    build_model,
    desk_scale_config,
    encode_input,
)
from .training import LossBreakdown, TrainConfig, compute_loss, strip_decoder, train
from .decoding import HypothesisSet, PredictionSet, beam_search, predict_topk, translate
from .agreement import (
    AgreementRecord,
    AgreementReport,
    aggregate_report,
    check_agreement,
    joint_inference,
    prefix_match,
    translation_upper_bound,
)
from .analysis import (
    AnalysisCase,
    GroupReport,
    accuracy,
    error_groups,
    improvement_groups,
)
from .stem import same_stem, stem
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "ParallelPair", "Vocabulary", "build_vocab", "load_parallel",
    "BpeModel", "learn_bpe", "bpe_encode", "bpe_decode",
    "GenConfig", "RomanizationTable", "WlacExample", "typing_form",
    "generate_example", "generate_dataset", "make_toy_corpus",
    "ModelConfig", "EncoderInput", "JointModel", "encode_input",
    "build_model", "desk_scale_config",
    "TrainConfig", "LossBreakdown", "compute_loss", "train", "strip_decoder",
    "PredictionSet", "HypothesisSet", "predict_topk", "beam_search", "translate",
    "AgreementRecord", "AgreementReport", "check_agreement", "joint_inference",
    "translation_upper_bound", "prefix_match", "aggregate_report",
    "AnalysisCase", "GroupReport", "accuracy", "improvement_groups", "error_groups",
    "stem", "same_stem",
    "save_checkpoint", "load_checkpoint",
    "__version__",
]
