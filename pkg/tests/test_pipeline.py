import json

import numpy as np
import pytest

from sstrack.augment import AugConfig
from sstrack.boxes import iou
from sstrack.losses import LossConfig
from sstrack.model import BoxOracleModel, ModelConfig, TrackerModel
from sstrack.optim import AdamW
from sstrack.pipeline import (TrainConfig, TrainingDiverged, backward_phase,
                              ci_config, forward_phase, train, train_step)
from sstrack.synth import SequenceSample, make_dataset


def tiny_cfg(**kw):
    base = dict(model=ModelConfig(patch_size=16, embed_dim=32, depth=2,
                                  num_heads=2, ref_size=32, search_size=64),
                seed=0)
    base.update(kw)
    return TrainConfig(**base)


def identity_aug():
    return AugConfig(scale=False, shear=False, lsj=False, blur=False)


@pytest.fixture(scope="module")
def dataset():
    return make_dataset("easy", seed=31, num=4)


@pytest.fixture()
def model():
    return TrackerModel(ModelConfig(patch_size=16, embed_dim=32, depth=2,
                                    num_heads=2, ref_size=32, search_size=64), seed=0)


def labeled_copy(seq):
    return SequenceSample(seq.name, seq.frames, seq.boxes, use_labels=True)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            tiny_cfg(n_global_search=0)
        with pytest.raises(ValueError):
            tiny_cfg(m_views=1)
        with pytest.raises(ValueError):
            tiny_cfg(k_backward_refs=9)
        with pytest.raises(ValueError):
            tiny_cfg(labeled_fraction=1.5)

    def test_json_round_trip(self, tmp_path):
        cfg = tiny_cfg(labeled_fraction=0.25,
                       aug=AugConfig(shear=False),
                       loss=LossConfig(tau=0.2))
        path = tmp_path / "cfg.json"
        path.write_text(cfg.to_json())
        back = TrainConfig.from_json_file(path)
        assert back == cfg

    def test_ci_preset_is_300_steps(self):
        cfg = ci_config()
        assert cfg.epochs * cfg.steps_per_epoch == 300


class TestForwardPhase:
    def test_one_step_per_search_frame(self, model, dataset):
        cfg = tiny_cfg(n_global_search=1)
        steps = forward_phase(model, dataset[0], cfg)
        assert len(steps) == 1
        cfg3 = tiny_cfg(n_global_search=3)
        assert len(forward_phase(model, dataset[0], cfg3)) == 3

    def test_oracle_tracks_ground_truth(self, dataset):
        cfg = tiny_cfg()
        oracle = BoxOracleModel(cfg.model)
        seq = labeled_copy(dataset[0])
        steps = forward_phase(oracle, seq, cfg)
        for s in steps:
            assert iou(s.box, seq.boxes[s.frame_index]) > 0.999999

    def test_oracle_static_target_keeps_frame1_box(self):
        from sstrack.synth import SceneSpec, SpriteSpec, generate
        seq = generate(SceneSpec(target=SpriteSpec(trajectory="linear", speed=0.0,
                                                   heading=0.0, start=(80.0, 80.0)),
                                 rng_seed=2))
        cfg = tiny_cfg()
        steps = forward_phase(BoxOracleModel(cfg.model), labeled_copy(seq), cfg)
        for s in steps:
            assert iou(s.box, seq.init_box) > 0.999999

    def test_crops_center_on_predictions(self, dataset):
        cfg = tiny_cfg()
        oracle = BoxOracleModel(cfg.model)
        steps = forward_phase(oracle, labeled_copy(dataset[0]), cfg)
        for s in steps:
            assert s.window.cx == pytest.approx(s.box.cx)
            assert s.window.cy == pytest.approx(s.box.cy)

    def test_forward_boxes_independent_of_backward(self, model, dataset):
        cfg = tiny_cfg()
        steps1 = forward_phase(model, dataset[0], cfg)
        # run a backward phase, then forward again: identical boxes
        backward_phase(model, dataset[0], steps1, cfg, np.random.default_rng(0))
        steps2 = forward_phase(model, dataset[0], cfg)
        for a, b in zip(steps1, steps2):
            assert a.box == b.box


class TestBackwardPhase:
    def test_view_count_and_terms(self, model, dataset):
        cfg = tiny_cfg(m_views=2)
        steps = forward_phase(model, dataset[0], cfg)
        res = backward_phase(model, dataset[0], steps, cfg, np.random.default_rng(0))
        assert len(res.view_losses) == 2
        assert len(res.boxes) == 2
        assert len(res.embeddings) == 2

    def test_oracle_identity_views_zero_loss(self, dataset):
        cfg = tiny_cfg(aug=identity_aug())
        oracle = BoxOracleModel(cfg.model)
        seq = labeled_copy(dataset[0])
        steps = forward_phase(oracle, seq, cfg)
        res = backward_phase(oracle, seq, steps, cfg, np.random.default_rng(0),
                             labeled=True)
        assert all(l.item() < 1e-3 for l in res.view_losses)
        for b in res.boxes:
            assert iou(b, seq.init_box) > 0.999999

    def test_loss_order_invariant(self, model, dataset):
        cfg = tiny_cfg()
        steps = forward_phase(model, dataset[0], cfg)
        res = backward_phase(model, dataset[0], steps, cfg, np.random.default_rng(3))
        total = sum(l.item() for l in res.view_losses)
        assert total == pytest.approx(sum(l.item() for l in reversed(res.view_losses)))

    def test_requires_forward_crops(self, model, dataset):
        with pytest.raises(ValueError):
            backward_phase(model, dataset[0], [], tiny_cfg(), np.random.default_rng(0))


class TestTrainStep:
    def test_zero_lr_keeps_params(self, model, dataset):
        cfg = tiny_cfg()
        opt = AdamW(model.params, lr_backbone=0.0, lr_heads=0.0, weight_decay=0.0)
        before = {k: p.data.copy() for k, p in model.params.items()}
        res = train_step(model, dataset[:2], cfg, opt, np.random.default_rng(0))
        assert np.isfinite(res.loss_all)
        for k, p in model.params.items():
            np.testing.assert_array_equal(p.data, before[k])

    def test_embedding_bookkeeping(self, model, dataset):
        cfg = tiny_cfg(m_views=2, use_contrastive=True)
        opt = AdamW(model.params, lr_backbone=1e-4)
        res = train_step(model, dataset[:2], cfg, opt, np.random.default_rng(0))
        assert not res.skip_flags["contrastive_skipped"]
        assert len(res.backward_boxes) == 2
        assert all(len(b) == 2 for b in res.backward_boxes)

    def test_eq6_identity_exact(self, model, dataset):
        cfg = tiny_cfg()
        res = train_step(model, dataset[:2], cfg, None, np.random.default_rng(0))
        assert res.loss_all == res.loss_track + res.loss_cont

    def test_contrastive_disabled_zeroes_term(self, model, dataset):
        cfg = tiny_cfg(use_contrastive=False)
        res = train_step(model, dataset[:2], cfg, None, np.random.default_rng(0))
        assert res.loss_cont == 0.0
        assert res.loss_all == res.loss_track

    def test_single_sequence_batch_skips_contrastive(self, model, dataset):
        cfg = tiny_cfg()
        res = train_step(model, dataset[:1], cfg, None, np.random.default_rng(0))
        assert res.skip_flags["contrastive_skipped"]
        assert res.loss_cont == 0.0

    def test_labeled_fraction_zero_means_no_forward_terms(self, model, dataset):
        # same rng, same model: forward losses would change loss_track if added
        cfg = tiny_cfg()
        res_plain = train_step(model, dataset[:2], cfg, None, np.random.default_rng(5))
        labeled = [labeled_copy(s) for s in dataset[:2]]
        res_lab = train_step(model, labeled, cfg, None, np.random.default_rng(5))
        assert res_lab.loss_track != res_plain.loss_track

    def test_stop_gradient_forward_phase_out_of_graph(self, dataset):
        """With labels off, gradients are identical whether or not the
        forward phase builds a graph: nothing leaks across the crop."""
        cfg = tiny_cfg()
        grads = {}
        for tag, force_graph in (("detached", False), ("in_graph", True)):
            model = TrackerModel(cfg.model, seed=7)
            rng = np.random.default_rng(11)
            track_terms = []
            embs = []
            for seq in dataset[:2]:
                fsteps = forward_phase(model, seq, cfg, build_graph=force_graph)
                res = backward_phase(model, seq, fsteps, cfg, rng)
                track_terms.extend(res.view_losses)
                embs.extend(res.embeddings)
            from sstrack import tensor as T
            from sstrack.losses import contrastive_loss
            loss = T.mean(T.stack(track_terms)) + contrastive_loss(embs, cfg.loss)[0]
            loss.backward()
            grads[tag] = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                          for k, p in model.params.items()}
        for k in grads["detached"]:
            np.testing.assert_array_equal(grads["detached"][k], grads["in_graph"][k])

    def test_empty_batch_rejected(self, model):
        with pytest.raises(ValueError):
            train_step(model, [], tiny_cfg(), None, np.random.default_rng(0))

    def test_divergence_diagnostics(self, model, dataset, monkeypatch):
        cfg = tiny_cfg()
        import sstrack.pipeline as pl
        real = pl.contrastive_loss
        def poisoned(embs, lc):
            from sstrack.tensor import Tensor
            return Tensor(np.array(np.inf)), False
        monkeypatch.setattr(pl, "contrastive_loss", poisoned)
        with pytest.raises(TrainingDiverged, match=dataset[0].name):
            train_step(model, dataset[:2], cfg, None, np.random.default_rng(0))
        monkeypatch.setattr(pl, "contrastive_loss", real)


class TestTrain:
    def test_zero_steps_writes_initial_checkpoint(self, dataset, tmp_path):
        cfg = tiny_cfg(epochs=0, steps_per_epoch=0)
        log = train(cfg, dataset[:2], tmp_path)
        assert log == []
        assert (tmp_path / "last.ckpt").exists()
        assert (tmp_path / "best.ckpt").exists()

    def test_fixed_seed_bit_identical_logs(self, dataset, tmp_path):
        cfg = tiny_cfg(epochs=1, steps_per_epoch=3, batch_size=2, seed=3)
        log1 = train(cfg, dataset[:2], tmp_path / "a")
        log2 = train(cfg, dataset[:2], tmp_path / "b")
        assert log1 == log2
        assert (tmp_path / "a" / "train_log.jsonl").read_text() == \
            (tmp_path / "b" / "train_log.jsonl").read_text()

    def test_losses_logged_with_schema(self, dataset, tmp_path):
        cfg = tiny_cfg(epochs=1, steps_per_epoch=2, batch_size=2)
        log = train(cfg, dataset[:2], tmp_path)
        for line, entry in zip((tmp_path / "train_log.jsonl").read_text().splitlines(), log):
            assert json.loads(line) == entry
            assert set(entry) == {"step", "epoch", "loss_track", "loss_cont",
                                  "loss_all", "lr"}

    def test_resume_continues_from_checkpoint(self, dataset, tmp_path):
        cfg = tiny_cfg(epochs=2, steps_per_epoch=2, batch_size=2, seed=5)
        full = train(cfg, dataset[:2], tmp_path / "full")
        half_cfg = tiny_cfg(epochs=1, steps_per_epoch=2, batch_size=2, seed=5)
        train(half_cfg, dataset[:2], tmp_path / "resumed")
        resumed = train(cfg, dataset[:2], tmp_path / "resumed", resume=True)
        assert [e["loss_all"] for e in resumed] == \
            [e["loss_all"] for e in full[2:]]

    def test_labeled_fraction_marks_sequences(self, dataset, tmp_path):
        cfg = tiny_cfg(epochs=1, steps_per_epoch=1, batch_size=2,
                       labeled_fraction=1.0)
        log = train(cfg, dataset[:2], tmp_path)
        assert np.isfinite(log[0]["loss_all"])

    def test_empty_dataset_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            train(tiny_cfg(), [], tmp_path)
