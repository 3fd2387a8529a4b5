"""Acceptance suite: one test per criterion, each printing a PASS line.

Run `pytest tests/test_acceptance.py -v -s` to see the per-criterion lines.
Every tolerance is pinned here; the seed-0 scenario constants were frozen
after the first verified runs and are documented inline.
"""

import json
import math
import time

import numpy as np
import pytest

from textprobe.cli import main as cli_main
from textprobe.core import (
    ClassTextEmbeddings,
    ZeroShotConfig,
    predict_class,
    stable_softmax,
    zero_shot_probabilities,
)
from textprobe.data import (
    EmbeddingBundle,
    MODALITY_IMAGE,
    MODALITY_TEXT,
    SyntheticSpaceConfig,
    TextDataset,
    read_bundle,
    synthetic_bundle,
    synthetic_encode,
    write_bundle,
)
from textprobe.errors import FormatError, TruncatedFile
from textprobe.evaluate import (
    PseudoLabelConfig,
    evaluate_classifier,
    pseudo_label_refine,
    train_tot_cls,
)
from textprobe.prompts import ClassVocabulary, TaskProfile, render_prompts
from textprobe.train import (
    TrainConfig,
    smoothed_cross_entropy,
    train_text_classifier,
    training_loss_and_grads,
)

VOCAB10 = ClassVocabulary(tuple(f"class_{i:02d}" for i in range(10)))


def report(n, text):
    print(f"CRITERION {n} PASS: {text}")


def dataset_for(bundle, vocab):
    return TextDataset(items=[("sample", int(c)) for c in bundle.labels], vocab=vocab)


def test_criterion_01_gradient_oracle():
    """Analytic gradients vs central finite differences at 20 random points."""
    start = time.monotonic()
    rng = np.random.default_rng(0)
    h = 1e-5
    worst = 0.0
    for _ in range(20):
        k = int(rng.integers(3, 7))
        d = int(rng.integers(4, 11))
        n = int(rng.integers(5, 21))
        W = rng.standard_normal((k, d))
        b = rng.standard_normal(k)
        X = rng.standard_normal((n, d)) * 2
        y = rng.integers(0, k, size=n)
        sigma = float(rng.uniform(0.0, 1.5))
        noise = sigma * rng.standard_normal((n, d))  # fixed realization
        eps = float(rng.uniform(0.0, 0.5))
        _, gw, gb = training_loss_and_grads(W, b, X, y, noise=noise, label_smoothing=eps)

        def loss_at(Wx, bx):
            value, _, _ = training_loss_and_grads(
                Wx, bx, X, y, noise=noise, label_smoothing=eps
            )
            return value

        for i in range(k):
            for j in range(d):
                Wp, Wm = W.copy(), W.copy()
                Wp[i, j] += h
                Wm[i, j] -= h
                fd = (loss_at(Wp, b) - loss_at(Wm, b)) / (2 * h)
                rel = abs(gw[i, j] - fd) / max(abs(gw[i, j]), abs(fd), 1e-4)
                worst = max(worst, rel)
        for i in range(k):
            bp, bm = b.copy(), b.copy()
            bp[i] += h
            bm[i] -= h
            fd = (loss_at(W, bp) - loss_at(W, bm)) / (2 * h)
            rel = abs(gb[i] - fd) / max(abs(gb[i]), abs(fd), 1e-4)
            worst = max(worst, rel)
    elapsed = time.monotonic() - start
    assert worst < 1e-4
    assert elapsed < 5.0
    report(1, f"gradient oracle worst relative error {worst:.2e} in {elapsed:.2f}s")


def test_criterion_02_loss_oracle():
    """smoothed_cross_entropy vs an explicit -sum q_c log p_c loop."""
    start = time.monotonic()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 17))
        logits = rng.standard_normal(k) * float(rng.uniform(0.5, 8.0))
        true = int(rng.integers(0, k))
        eps = float(rng.uniform(0.0, 0.99))
        loss, _ = smoothed_cross_entropy(logits, true, eps)

        m = max(logits)
        exps = [math.exp(x - m) for x in logits]
        z = sum(exps)
        brute = 0.0
        for c in range(k):
            q = eps / k + (1.0 - eps if c == true else 0.0)
            brute -= q * math.log(exps[c] / z)
        worst = max(worst, abs(loss - brute))
    elapsed = time.monotonic() - start
    assert worst < 1e-10
    assert elapsed < 1.0
    report(2, f"loss oracle worst absolute error {worst:.2e} over 1000 instances in {elapsed:.2f}s")


def test_criterion_03_softmax_invariants():
    """Normalization, temperature-argmax invariance, and shift invariance."""
    rng = np.random.default_rng(2)
    for _ in range(1000):
        k = int(rng.integers(2, 12))
        d = int(rng.integers(2, 24))
        ce = ClassTextEmbeddings.from_matrix(rng.standard_normal((k, d)))
        img = rng.standard_normal(d)
        tau = float(rng.uniform(0.005, 3.0))
        probs = zero_shot_probabilities(img, ce, ZeroShotConfig(tau))
        assert abs(probs.sum() - 1.0) < 1e-6

        picks = {
            predict_class(zero_shot_probabilities(img, ce, ZeroShotConfig(t)))
            for t in (0.01, 0.07, 1.0)
        }
        assert len(picks) == 1

        logits = rng.standard_normal(k) * 10
        shift = float(rng.uniform(-1000, 1000))
        assert np.max(np.abs(stable_softmax(logits) - stable_softmax(logits + shift))) < 1e-9
    report(3, "softmax sums, temperature-argmax, and shift invariance on 1000 instances")


def test_criterion_04_cross_modal_transfer():
    """Text-trained head classifies images via the shared space.

    K=10, d=128, sigma_intra=0.1, gap=0, seed 0; 50 text samples/class to
    train, 200 image samples/class to test; training noise 0.1, smoothing 0.1.
    Frozen seed-0 result: 100.00% image accuracy.
    """
    start = time.monotonic()
    space = SyntheticSpaceConfig(dimension=128, classes=10, sigma_intra=0.1, gap=0.0, seed=0)
    text = synthetic_bundle(space, 50, modality=MODALITY_TEXT)
    images = synthetic_bundle(space, 200, modality=MODALITY_IMAGE)
    cfg = TrainConfig(noise_sigma=0.1, label_smoothing=0.1, steps=500, seed=0)
    clf = train_text_classifier(dataset_for(text, VOCAB10), text, cfg)
    row = evaluate_classifier(clf, images)
    elapsed = time.monotonic() - start
    assert row.accuracy >= 99.0
    assert elapsed < 30.0
    report(4, f"cross-modal image accuracy {row.accuracy:.2f}% in {elapsed:.2f}s")


def test_criterion_05_targeting_beats_generic():
    """Corrupted description sources cost the generic head its classes.

    The 'generic' text samples for classes 0..2 are drawn from wrong class
    means (derangement 0->1->2->0, modeling confidently-wrong homonym
    descriptions); 'targeted' samples use the correct means. Frozen seed-0
    result: targeted 100.00% vs generic 70.00% (margin 30.0 points).
    """
    start = time.monotonic()
    space = SyntheticSpaceConfig(dimension=128, classes=10, sigma_intra=0.1, gap=0.0, seed=0)
    images = synthetic_bundle(space, 200, modality=MODALITY_IMAGE)
    cfg = TrainConfig(noise_sigma=0.1, label_smoothing=0.1, steps=500, seed=0)

    wrong_mean = {0: 1, 1: 2, 2: 0}
    true_items = [("text", c) for c in range(10) for _ in range(50)]
    generic_sources = [("text", wrong_mean.get(c, c)) for _, c in true_items]
    generic_bundle = synthetic_encode(generic_sources, space, modality=MODALITY_TEXT)
    targeted_bundle = synthetic_encode(true_items, space, modality=MODALITY_TEXT)

    dataset = TextDataset(items=true_items, vocab=VOCAB10)
    clf_generic = train_text_classifier(dataset, generic_bundle, cfg)
    clf_targeted = train_text_classifier(dataset, targeted_bundle, cfg)
    acc_generic = evaluate_classifier(clf_generic, images).accuracy
    acc_targeted = evaluate_classifier(clf_targeted, images).accuracy
    elapsed = time.monotonic() - start
    assert acc_targeted - acc_generic >= 20.0
    assert elapsed < 30.0
    report(
        5,
        f"targeted {acc_targeted:.2f}% vs generic {acc_generic:.2f}% "
        f"(margin {acc_targeted - acc_generic:.2f}) in {elapsed:.2f}s",
    )


def test_criterion_06_baseline_ordering():
    """Many targeted samples beat one class-name sample under a modality gap.

    gap=0.2, sigma_intra=0.2 (see ledger), seed 0: the main head trains on 50
    samples/class, the cls-only baseline on a single class-name sample per
    class. Frozen seed-0 result: 99.30% vs 88.70% (margin 10.6 points).
    """
    space = SyntheticSpaceConfig(dimension=128, classes=10, sigma_intra=0.2, gap=0.2, seed=0)
    text = synthetic_bundle(space, 50, modality=MODALITY_TEXT)
    images = synthetic_bundle(space, 200, modality=MODALITY_IMAGE)
    cfg = TrainConfig(noise_sigma=0.1, label_smoothing=0.1, steps=500, seed=0)

    tap = train_text_classifier(dataset_for(text, VOCAB10), text, cfg)
    cls_items = [(name, cid) for cid, name in VOCAB10.classes]
    cls_bundle = synthetic_encode(cls_items, space, modality=MODALITY_TEXT)
    tot = train_tot_cls(VOCAB10, cls_bundle, cfg)

    acc_tap = evaluate_classifier(tap, images).accuracy
    acc_tot = evaluate_classifier(tot, images).accuracy
    assert acc_tap >= acc_tot
    assert acc_tap - acc_tot >= 2.0
    report(
        6,
        f"many-sample head {acc_tap:.2f}% >= cls-only {acc_tot:.2f}% "
        f"(margin {acc_tap - acc_tot:.2f})",
    )


def test_criterion_07_pseudo_label_refinement():
    """Self-training lifts a weakened head on unlabeled images.

    Documented seed-0 configuration (see ledger for the calibration note):
    text side sigma_intra=0.75, images 0.1, d=128, K=10; initial head trained
    overconfident on 10 texts/class (lr=0.003, steps=1500, eps=0, sigma=0,
    wd=0); refinement on 500 unlabeled images at threshold 0.95 for 500 steps
    at lr=1e-3. Frozen values: initial 78.35%, refined 87.70%, 41 kept.
    """
    img_space = SyntheticSpaceConfig(dimension=128, classes=10, sigma_intra=0.1, gap=0.0, seed=0)
    txt_space = SyntheticSpaceConfig(dimension=128, classes=10, sigma_intra=0.75, gap=0.0, seed=0)
    unlabeled = synthetic_bundle(img_space, 50, modality=MODALITY_IMAGE)
    heldout = synthetic_bundle(img_space, 200, modality=MODALITY_IMAGE)

    items = [("text", c) for c in range(10) for _ in range(10)]
    text = synthetic_encode(items, txt_space, modality=MODALITY_TEXT)
    weak_cfg = TrainConfig(
        learning_rate=0.003, steps=1500, noise_sigma=0.0,
        label_smoothing=0.0, weight_decay=0.0, seed=0,
    )
    weak = train_text_classifier(TextDataset(items=items, vocab=VOCAB10), text, weak_cfg)
    initial = evaluate_classifier(weak, heldout).accuracy

    refined = pseudo_label_refine(
        weak, unlabeled,
        PseudoLabelConfig(confidence_threshold=0.95, refine_steps=500, refine_lr=0.001),
    )
    after = evaluate_classifier(refined, heldout).accuracy
    kept = refined.train_meta["refine"]["kept"]

    assert 60.0 <= initial <= 90.0  # genuinely weakened, not destroyed
    assert after >= initial
    assert after - initial >= 5.0
    assert kept > 0
    report(
        7,
        f"refinement {initial:.2f}% -> {after:.2f}% "
        f"(+{after - initial:.2f} points, kept {kept})",
    )


def test_criterion_08_determinism_and_formats(tmp_path):
    """Bytewise repeatability and bundle format error handling."""
    # Repeated seeded CLI runs produce identical classifier bytes.
    clf_a, clf_b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (clf_a, clf_b):
        assert cli_main([
            "train", "--synthetic", "--steps", "120", "--seed", "11",
            "--out", str(out),
        ]) == 0
    assert clf_a.read_bytes() == clf_b.read_bytes()

    # Repeated report generation is bytewise identical too.
    images = tmp_path / "images.tape"
    assert cli_main([
        "synth-space", "--modality", "image", "--per-class", "20",
        "--out", str(images),
    ]) == 0
    rep_a, rep_b = tmp_path / "ra.json", tmp_path / "rb.json"
    for rep in (rep_a, rep_b):
        assert cli_main([
            "eval", "--images", str(images), "--classifier", str(clf_a),
            "--methods", "tap", "--out", str(rep),
        ]) == 0
    assert rep_a.read_bytes() == rep_b.read_bytes()

    # Bundle round trip is lossless on 100 random bundles.
    rng = np.random.default_rng(8)
    path = tmp_path / "round.tape"
    for _ in range(100):
        rows = int(rng.integers(1, 30))
        dim = int(rng.integers(1, 40))
        mat = (rng.standard_normal((rows, dim)) * 100).astype(np.float32)
        bundle = EmbeddingBundle.from_matrix(mat)
        write_bundle(bundle, path)
        loaded = read_bundle(path)
        assert loaded.matrix.tobytes() == bundle.matrix.tobytes()

    # Malformed files raise the right error types.
    bad_magic = tmp_path / "bad.tape"
    bad_magic.write_bytes(b"JUNK" + bytes(20))
    with pytest.raises(FormatError):
        read_bundle(bad_magic)
    write_bundle(EmbeddingBundle.from_matrix(np.ones((4, 4), dtype=np.float32)), path)
    truncated = tmp_path / "short.tape"
    truncated.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(TruncatedFile):
        read_bundle(truncated)
    report(8, "bytewise-identical artifacts, 100 lossless round trips, format errors raised")


def test_criterion_09_prompt_engine_properties():
    """Class balance and Cartesian cardinality over 200 random profiles,
    plus the four targeted question strings reproduced verbatim."""
    rng = np.random.default_rng(9)
    for _ in range(200):
        k = int(rng.integers(1, 9))
        vocab = ClassVocabulary(tuple(f"name{i}" for i in range(k)))
        n_templates = int(rng.integers(1, 4))
        if rng.integers(0, 2) == 0:
            profile = TaskProfile(
                task_name="p",
                shift_kind="fine_grained",
                superclass_token="thing",
                question_templates=tuple(
                    f"q{t} {{class}} {{superclass}}?" for t in range(n_templates)
                ),
            )
            expected_per_class = n_templates
        else:
            n_desc = int(rng.integers(1, 4))
            profile = TaskProfile(
                task_name="p",
                shift_kind="cross_domain",
                domain_descriptors=tuple(f"d{j}" for j in range(n_desc)),
                question_templates=tuple(
                    f"q{t} {{class}} {{domain}}?" for t in range(n_templates)
                ),
            )
            expected_per_class = n_templates * n_desc
        prompts = render_prompts(profile, vocab)
        assert len(prompts) == k * expected_per_class
        for cid in range(k):
            assert sum(p.class_id == cid for p in prompts) == expected_per_class

    texture = render_prompts(
        TaskProfile(
            task_name="dtd", shift_kind="fine_grained", superclass_token="texture"
        ),
        ClassVocabulary(("banded", "braided")),
    )
    texture_texts = [p.rendered_text for p in texture]
    assert "Describe what a banded texture looks like." in texture_texts
    assert "Describe what a braided texture looks like." in texture_texts

    flowers = render_prompts(
        TaskProfile(
            task_name="flowers",
            shift_kind="fine_grained",
            superclass_token="flower",
            question_templates=("How can you identify a {class} {superclass}?",),
        ),
        ClassVocabulary(("fritillary",)),
    )
    assert flowers[0].rendered_text == "How can you identify a fritillary flower?"

    satellite = render_prompts(
        TaskProfile(
            task_name="eurosat",
            shift_kind="cross_domain",
            domain_descriptors=("from a satellite",),
        ),
        ClassVocabulary(("forest", "river")),
    )
    satellite_texts = [p.rendered_text for p in satellite]
    assert "Describe what a forest looks like from a satellite." in satellite_texts
    assert "How can you identify a river from a satellite?" in satellite_texts
    report(9, "200 random profiles balanced; four targeted question strings verbatim")


def test_criterion_10_run_all_quickstart(tmp_path, capsys):
    """Full pipeline from fixture descriptions to a 5-method report."""
    start = time.monotonic()
    ws = tmp_path / "ws"
    assert cli_main([
        "demo", "--workspace", str(ws), "--image-samples", "100", "--steps", "300",
    ]) == 0
    assert cli_main(["run-all", "--manifest", str(ws / "manifest.json")]) == 0
    elapsed = time.monotonic() - start
    table = capsys.readouterr().out
    doc = json.loads((ws / "report.json").read_text())
    methods = [row["method"] for row in doc["rows"]]
    assert methods == ["tap", "clip-single", "clip-dst", "tot-cls", "tot-dst"]
    assert "Mean" in table
    assert elapsed < 60.0
    report(10, f"run-all produced a 5-method matrix in {elapsed:.2f}s")
