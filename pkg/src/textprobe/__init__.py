"""textprobe: train a linear classifier on LLM-generated class descriptions
and apply it to image embeddings through a shared text-image space."""

from .core import (
    ClassTextEmbeddings,
    ZeroShotConfig,
    cosine_similarity,
    normalize,
    predict_class,
    stable_softmax,
    zero_shot_probabilities,
)
from .data import (
    EmbeddingBundle,
    SyntheticSpaceConfig,
    TextDataset,
    build_text_dataset,
    read_bundle,
    synthetic_bundle,
    synthetic_class_means,
    synthetic_encode,
    write_bundle,
)
from .evaluate import (
    EvalReport,
    EvalRow,
    PseudoLabelConfig,
    SINGLE_TEMPLATE,
    build_tot_baselines,
    class_text_embeddings_from_bundle,
    evaluate_classifier,
    evaluate_zero_shot,
    pseudo_label_refine,
    render_report,
    train_tot_cls,
    train_tot_dst,
)
from .llm import (
    Description,
    FixtureTransport,
    HttpTransport,
    LlmRequest,
    MockTransport,
    fetch_descriptions,
    fetch_descriptions_partial,
    load_fixture_descriptions,
)
from .prompts import (
    ClassVocabulary,
    TargetedPrompt,
    TaskProfile,
    render_generic_prompts,
    render_prompts,
)
from .train import (
    LinearClassifier,
    TrainConfig,
    classifier_logits,
    smoothed_cross_entropy,
    train_text_classifier,
    training_loss_and_grads,
)

__version__ = "0.1.0"

__all__ = [
    "ClassTextEmbeddings",
    "ClassVocabulary",
    "Description",
    "EmbeddingBundle",
    "EvalReport",
    "EvalRow",
    "FixtureTransport",
    "HttpTransport",
    "LinearClassifier",
    "LlmRequest",
    "MockTransport",
    "PseudoLabelConfig",
    "SINGLE_TEMPLATE",
    "SyntheticSpaceConfig",
    "TargetedPrompt",
    "TaskProfile",
    "TextDataset",
    "TrainConfig",
    "ZeroShotConfig",
    "build_text_dataset",
    "build_tot_baselines",
    "class_text_embeddings_from_bundle",
    "classifier_logits",
    "cosine_similarity",
    "evaluate_classifier",
    "evaluate_zero_shot",
    "fetch_descriptions",
    "fetch_descriptions_partial",
    "load_fixture_descriptions",
    "normalize",
    "predict_class",
    "pseudo_label_refine",
    "read_bundle",
    "render_generic_prompts",
    "render_prompts",
    "render_report",
    "smoothed_cross_entropy",
    "stable_softmax",
    "synthetic_bundle",
    "synthetic_class_means",
    "synthetic_encode",
    "train_text_classifier",
    "train_tot_cls",
    "train_tot_dst",
    "training_loss_and_grads",
    "write_bundle",
    "zero_shot_probabilities",
]
