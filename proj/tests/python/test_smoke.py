import json

import numpy as np
import pytest

import abn_tutor as abn


@pytest.fixture(scope="module")
def corpus():
    return abn.generate_corpus(seed=3)


@pytest.fixture(scope="module")
def small_train(corpus):
    train = corpus.split(abn.Split.train)
    return [s for s in train if s.label == 0][:6] + [s for s in train if s.label == 1][:6]


def test_corpus_shape(corpus):
    assert len(corpus) == 325
    s = corpus.samples[0]
    assert s.image.shape == (64, 64)
    assert s.image.dtype == np.float32
    assert 0.0 <= s.image.min() and s.image.max() <= 1.0
    for x in corpus.samples:
        assert (x.label == 1) == (x.expert_mask is not None and x.expert_mask.any())
    assert len(corpus.split(abn.Split.quiz)) == 60


def test_dataset_round_trip(corpus, tmp_path):
    manifest = abn.write_dataset(corpus, str(tmp_path))
    back = abn.load_dataset(manifest)
    assert len(back) == len(corpus)
    a, b = corpus.samples[5], back.find(corpus.samples[5].id)
    assert np.array_equal(a.image, b.image)


def test_forward_outputs(corpus):
    m = abn.Model(abn.ArchConfig(), 1)
    out = m.forward(corpus.samples[0].image)
    assert out["attention_map"].shape == (8, 8)
    assert out["perception_logits"].shape == (2,)
    assert ((out["attention_map"] >= 0) & (out["attention_map"] <= 1)).all()
    zero = m.forward_with_map(corpus.samples[0].image, np.zeros((8, 8), np.float32))
    bare = m.forward_without_attention(corpus.samples[0].image)
    assert np.array_equal(zero["perception_logits"], bare["perception_logits"])
    assert sum(v.size for v in m.parameters().values()) == abn.ArchConfig().parameter_count


def test_wrong_input_shape_raises():
    with pytest.raises(abn.ShapeError):
        abn.Model().forward(np.zeros((32, 32), np.float32))


def test_train_finetune_and_checkpoint(small_train, tmp_path):
    cfg = abn.TrainConfig()
    cfg.epochs = 2
    cfg.batch_size = 4
    model, first, last = abn.train(abn.Model(), small_train, cfg)
    assert np.isfinite(first) and np.isfinite(last)

    ft = abn.default_finetune_config()
    ft.epochs = 1
    tuned, report = abn.finetune(model, small_train, ft)
    assert report["n_expert"] == 6
    assert abn.extractor_hash(tuned) == abn.extractor_hash(model)

    path = str(tmp_path / "m.ckpt")
    tuned.tag = "embedded"
    tuned.save(path)
    back = abn.load_checkpoint(path)
    assert back.tag == "embedded"
    for k, v in tuned.parameters().items():
        assert np.array_equal(v, back.parameters()[k])

    rep = json.loads(abn.evaluate(back, small_train))
    assert rep["n_samples"] == 12 and 0.0 <= rep["accuracy"] <= 1.0


def test_metrics_and_guided(corpus):
    a = np.array([[1, 1, 1, 1, 0, 0, 0, 0]], np.uint8)
    b = np.array([[0, 0, 1, 1, 1, 1, 0, 0]], np.uint8)
    assert abn.class_iou(a, b) == pytest.approx(2 / 6)
    assert abn.class_iou(a, a) == 1.0

    m = abn.Model()
    s = corpus.samples[0]
    mask = np.zeros((64, 64), np.uint8)
    mask[:32, :32] = 1
    r = abn.guided_forward(m, s.image, mask)
    assert sum(r["probabilities"]) == pytest.approx(1.0, abs=1e-9)
    assert r["map_used"].shape == (8, 8)
    assert np.array_equal(r["map_used"], abn.resample_edit(mask, 8, 8))
    with pytest.raises(abn.ShapeError):
        abn.guided_forward(m, s.image, np.zeros((8, 8), np.uint8))


def test_tutor_service_flow(corpus):
    svc = abn.TutorService(abn.Model(), corpus, reveal_expert_mask=True)
    status, created = abn.request_json(svc, "POST", "/sessions", {"learner_id": "ann", "seed": 1})
    assert status == 200 and created["schema_version"] == 1
    sid = created["session_id"]
    truth = corpus.find(created["sample"]["sample_id"]).label

    status, fb = abn.request_json(svc, "POST", f"/sessions/{sid}/judgment", {"label": 1 - truth})
    assert status == 200 and fb["state"] == "EditLoop" and fb["correct_label"] == truth

    mask = np.zeros((64, 64), int)
    mask[10:30, 10:30] = 1
    status, ed = abn.request_json(svc, "POST", f"/sessions/{sid}/edit", {"mask": mask.tolist()})
    assert status == 200 and ed["history_index"] == 0
    status, rev = abn.request_json(svc, "POST", f"/sessions/{sid}/finish-edit")
    assert status == 200 and rev["learner_mask"] == mask.tolist()

    status, err = abn.request_json(svc, "POST", f"/sessions/{sid}/finish-edit/extra")
    assert status == 404
    status, err = abn.request_json(svc, "POST", f"/sessions/{sid}/judgment", {"label": 0})
    assert status == 409 and err["error"]["kind"] == "state_violation"

    status, q = abn.request_json(svc, "POST", "/quizzes", {"learner_id": "ann", "phase": "pre"})
    assert status == 200 and q["total"] == 60
    status, _ = abn.request_json(svc, "POST", "/quizzes", {"learner_id": "ann", "phase": "pre"})
    assert status == 409
