"""Cross-modal evaluation, baseline classifiers, refinement, and reports.

The text-trained head is applied directly to image embeddings through the
shared space; the similarity-softmax baselines score images against one
(possibly template-ensembled) text embedding per class. Accuracy is
accumulated as an integer correct count, so evaluation order never matters.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ClassTextEmbeddings,
    ZeroShotConfig,
    normalize_rows,
    stable_softmax,
)
from .data import EmbeddingBundle, TextDataset
from .errors import (
    DimensionMismatch,
    EmptyReport,
    InvalidConfig,
    MissingLabels,
    ShapeMismatch,
)
from .prompts import ClassVocabulary, render_generic_prompts
from .train import LinearClassifier, TrainConfig, train_text_classifier

METHOD_TAP = "tap"
METHOD_CLIP_SINGLE = "clip-single"
METHOD_CLIP_DST = "clip-dst"
METHOD_TOT_CLS = "tot-cls"
METHOD_TOT_DST = "tot-dst"
ALL_METHODS = (
    METHOD_TAP,
    METHOD_CLIP_SINGLE,
    METHOD_CLIP_DST,
    METHOD_TOT_CLS,
    METHOD_TOT_DST,
)

# Default single prompt template for the similarity baseline.
SINGLE_TEMPLATE = "a photo of a {class}."


@dataclass
class EvalRow:
    method: str
    dataset: str
    accuracy: float  # top-1, percent
    sample_count: int
    per_class: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "dataset": self.dataset,
            "accuracy": self.accuracy,
            "sample_count": self.sample_count,
            "per_class": self.per_class,
        }


@dataclass
class EvalReport:
    rows: list[EvalRow]
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows], "config": self.config}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")


def _accuracy_row(
    predictions: np.ndarray,
    labels: np.ndarray,
    method: str,
    dataset: str,
) -> EvalRow:
    correct = int((predictions == labels).sum())
    total = int(labels.shape[0])
    per_class: dict = {}
    for cid in np.unique(labels):
        mask = labels == cid
        per_class[str(int(cid))] = {
            "count": int(mask.sum()),
            "accuracy": 100.0 * int((predictions[mask] == cid).sum()) / int(mask.sum()),
        }
    return EvalRow(
        method=method,
        dataset=dataset,
        accuracy=100.0 * correct / total,
        sample_count=total,
        per_class=per_class,
    )


def evaluate_classifier(
    clf: LinearClassifier,
    images: EmbeddingBundle,
    method: str = METHOD_TAP,
    dataset: str = "dataset",
) -> EvalRow:
    """Top-1 accuracy of the trained head on a labeled image bundle."""
    if images.labels is None:
        raise MissingLabels("image bundle has no labels")
    if images.dimension != clf.dimension:
        raise DimensionMismatch(
            f"classifier dimension {clf.dimension} vs bundle {images.dimension}"
        )
    predictions = clf.predict(images.matrix, normalize_input=True)
    return _accuracy_row(predictions, images.labels_array(), method, dataset)


def evaluate_zero_shot(
    class_embs: ClassTextEmbeddings,
    images: EmbeddingBundle,
    cfg: ZeroShotConfig | None = None,
    method: str = METHOD_CLIP_SINGLE,
    dataset: str = "dataset",
) -> EvalRow:
    """Top-1 accuracy of the similarity-softmax classifier.

    Image rows are normalized before scoring, so the logits are cosine
    similarities divided by the temperature; the argmax (and hence the
    accuracy) is invariant to the temperature value.
    """
    if cfg is None:
        cfg = ZeroShotConfig()
    if images.labels is None:
        raise MissingLabels("image bundle has no labels")
    if images.dimension != class_embs.dimension:
        raise DimensionMismatch(
            f"class embedding dimension {class_embs.dimension} "
            f"vs bundle {images.dimension}"
        )
    imgs = normalize_rows(images.matrix)
    probs = stable_softmax(imgs @ class_embs.matrix.T / cfg.temperature)
    predictions = np.argmax(probs, axis=1)
    return _accuracy_row(predictions, images.labels_array(), method, dataset)


def class_text_embeddings_from_bundle(bundle: EmbeddingBundle) -> ClassTextEmbeddings:
    """Ensemble a labeled text bundle into one unit embedding per class.

    Rows are normalized, averaged within each class, and the average is
    renormalized (standard prompt ensembling). Labels must cover the
    contiguous range 0..K-1.
    """
    if bundle.labels is None:
        raise MissingLabels("text bundle has no labels")
    labels = bundle.labels_array()
    classes = np.unique(labels)
    k = int(classes.max()) + 1
    if list(classes) != list(range(k)):
        raise ShapeMismatch(
            "bundle labels must cover every class id from 0 to K-1"
        )
    rows = normalize_rows(bundle.matrix)
    means = np.empty((k, bundle.dimension), dtype=np.float64)
    for cid in range(k):
        means[cid] = rows[labels == cid].mean(axis=0)
    return ClassTextEmbeddings.from_matrix(means, renormalize=True)


def train_tot_cls(
    vocab: ClassVocabulary,
    cls_bundle: EmbeddingBundle,
    cfg: TrainConfig | None = None,
) -> LinearClassifier:
    """Baseline head trained on one class-name embedding per class (K items)."""
    if cfg is None:
        cfg = TrainConfig()
    if cls_bundle.labels is None:
        raise MissingLabels("class-name bundle has no labels")
    cls_labels = list(cls_bundle.labels)
    if cls_labels != list(range(len(vocab))):
        raise ShapeMismatch(
            "class-name bundle must have exactly one row per class, in order"
        )
    dataset = TextDataset(
        items=[(vocab.name_of(c), c) for c in cls_labels], vocab=vocab
    )
    return train_text_classifier(dataset, cls_bundle, cfg)


def train_tot_dst(
    vocab: ClassVocabulary,
    dst_bundle: EmbeddingBundle,
    cfg: TrainConfig | None = None,
    dst_templates: list[str] | None = None,
) -> LinearClassifier:
    """Baseline head trained on every rendered template text (K * m items).

    When `dst_templates` is given, the bundle rows must follow the class-major
    render order and the dataset texts are the rendered strings; otherwise
    texts fall back to class names (text content does not affect training,
    labels and embeddings do).
    """
    if cfg is None:
        cfg = TrainConfig()
    if dst_bundle.labels is None:
        raise MissingLabels("template bundle has no labels")
    dst_labels = list(dst_bundle.labels)
    if dst_templates:
        rendered = render_generic_prompts(vocab, dst_templates, task_name="dst")
        if dst_labels != [p.class_id for p in rendered]:
            raise ShapeMismatch(
                "template bundle rows do not match the class-major render order "
                f"of {len(dst_templates)} template(s) over {len(vocab)} classes"
            )
        items = [(p.rendered_text, p.class_id) for p in rendered]
    else:
        items = [(vocab.name_of(c), c) for c in dst_labels]
    dataset = TextDataset(items=items, vocab=vocab)
    return train_text_classifier(dataset, dst_bundle, cfg)


def build_tot_baselines(
    vocab: ClassVocabulary,
    cls_bundle: EmbeddingBundle,
    dst_bundle: EmbeddingBundle,
    cfg: TrainConfig | None = None,
    dst_templates: list[str] | None = None,
) -> tuple[LinearClassifier, LinearClassifier]:
    """Train both text-only baseline heads with one config surface."""
    return (
        train_tot_cls(vocab, cls_bundle, cfg),
        train_tot_dst(vocab, dst_bundle, cfg, dst_templates),
    )


@dataclass(frozen=True)
class PseudoLabelConfig:
    confidence_threshold: float = 0.95
    refine_steps: int = 300
    refine_lr: float = 0.001

    def __post_init__(self):
        if not 0.0 < self.confidence_threshold <= 1.0:
            raise InvalidConfig(
                f"confidence_threshold must be in (0, 1], got {self.confidence_threshold}"
            )
        if self.refine_steps < 1:
            raise InvalidConfig(f"refine_steps must be >= 1, got {self.refine_steps}")
        if not self.refine_lr > 0:
            raise InvalidConfig(f"refine_lr must be > 0, got {self.refine_lr}")

    def to_dict(self) -> dict:
        return {
            "confidence_threshold": self.confidence_threshold,
            "refine_steps": self.refine_steps,
            "refine_lr": self.refine_lr,
        }


def pseudo_label_refine(
    clf: LinearClassifier,
    unlabeled_images: EmbeddingBundle,
    cfg: PseudoLabelConfig | None = None,
) -> LinearClassifier:
    """Self-train the head on its own confident predictions.

    Pseudo-labels are computed once, offline: softmax confidences of the
    current head over the unlabeled bundle, keeping images whose max
    probability clears the threshold. Training then continues from the
    current parameters with the smoothing and noise settings of the original
    run. If nothing clears the threshold the parameters are returned
    unchanged, with a warning flag in train_meta.
    """
    if cfg is None:
        cfg = PseudoLabelConfig()
    if unlabeled_images.dimension != clf.dimension:
        raise DimensionMismatch(
            f"classifier dimension {clf.dimension} vs bundle {unlabeled_images.dimension}"
        )
    probs = stable_softmax(clf.batch_logits(unlabeled_images.matrix, normalize_input=True))
    confidence = probs.max(axis=1)
    pseudo = np.argmax(probs, axis=1)
    keep = confidence >= cfg.confidence_threshold

    base_meta = dict(clf.train_meta)
    if not np.any(keep):
        meta = dict(base_meta)
        meta["refine"] = {
            **cfg.to_dict(),
            "kept": 0,
            "warning": "no images cleared the confidence threshold",
        }
        return LinearClassifier(
            weights=clf.weights, bias=clf.bias, vocab=clf.vocab, train_meta=meta
        )

    orig = TrainConfig.from_dict(base_meta.get("config", {}))
    refine_cfg = TrainConfig(
        learning_rate=cfg.refine_lr,
        steps=cfg.refine_steps,
        label_smoothing=orig.label_smoothing,
        noise_sigma=orig.noise_sigma,
        adam_beta1=orig.adam_beta1,
        adam_beta2=orig.adam_beta2,
        adam_eps=orig.adam_eps,
        weight_decay=orig.weight_decay,
        seed=orig.seed,
    )
    kept_matrix = unlabeled_images.matrix[keep]
    kept_labels = pseudo[keep]
    pseudo_dataset = TextDataset(
        items=[("pseudo-labeled image", int(c)) for c in kept_labels], vocab=clf.vocab
    )
    pseudo_bundle = EmbeddingBundle.from_matrix(kept_matrix)
    refined = train_text_classifier(
        pseudo_dataset, pseudo_bundle, refine_cfg,
        init_weights=clf.weights, init_bias=clf.bias,
    )
    meta = dict(refined.train_meta)
    meta["config"] = base_meta.get("config", orig.to_dict())
    meta["refine"] = {
        **cfg.to_dict(),
        "kept": int(keep.sum()),
        "initial_loss": refined.train_meta["initial_loss"],
        "final_loss": refined.train_meta["final_loss"],
    }
    refined.train_meta = meta
    return refined


# -- report rendering -------------------------------------------------------------

def _report_matrix(rows: list[EvalRow]):
    methods: list[str] = []
    datasets: list[str] = []
    cells: dict[tuple[str, str], float] = {}
    for row in rows:
        if row.method not in methods:
            methods.append(row.method)
        if row.dataset not in datasets:
            datasets.append(row.dataset)
        cells[(row.method, row.dataset)] = row.accuracy
    means = {
        m: float(np.mean([cells[(m, d)] for d in datasets if (m, d) in cells]))
        for m in methods
    }
    best: dict[str, str] = {}
    for d in datasets:
        scored = [(cells[(m, d)], m) for m in methods if (m, d) in cells]
        if scored:
            best[d] = max(scored, key=lambda t: t[0])[1]
    return methods, datasets, cells, means, best


def render_report(report: EvalReport | list[EvalRow], fmt: str = "table") -> str:
    """Render rows as an aligned table, JSON, or CSV.

    Column order is deterministic: datasets in first-appearance order, then a
    Mean column holding the arithmetic mean of the row's dataset accuracies.
    The table format marks the best value per dataset column with '*'; CSV
    stays purely numeric so it round-trips through any CSV parser.
    """
    rows = report.rows if isinstance(report, EvalReport) else list(report)
    if not rows:
        raise EmptyReport("no evaluation rows to render")
    methods, datasets, cells, means, best = _report_matrix(rows)

    if fmt == "json":
        doc = {
            "datasets": datasets,
            "rows": [
                {
                    "method": m,
                    "accuracy": {d: cells[(m, d)] for d in datasets if (m, d) in cells},
                    "mean": means[m],
                    "best_for": sorted(d for d in datasets if best.get(d) == m),
                }
                for m in methods
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", *datasets, "Mean"])
        for m in methods:
            writer.writerow(
                [m]
                + [repr(cells[(m, d)]) if (m, d) in cells else "" for d in datasets]
                + [repr(means[m])]
            )
        return buf.getvalue()

    if fmt == "table":
        header = ["method", *datasets, "Mean"]
        lines = []
        body = []
        for m in methods:
            row = [m]
            for d in datasets:
                if (m, d) in cells:
                    mark = "*" if best.get(d) == m else ""
                    row.append(f"{cells[(m, d)]:.2f}{mark}")
                else:
                    row.append("-")
            row.append(f"{means[m]:.2f}")
            body.append(row)
        widths = [
            max(len(header[i]), *(len(r[i]) for r in body)) for i in range(len(header))
        ]
        def fmt_row(values):
            return "  ".join(v.ljust(widths[i]) for i, v in enumerate(values)).rstrip()
        lines.append(fmt_row(header))
        lines.append(fmt_row(["-" * w for w in widths]))
        lines.extend(fmt_row(r) for r in body)
        return "\n".join(lines) + "\n"

    raise InvalidConfig(f"unknown report format {fmt!r}")
