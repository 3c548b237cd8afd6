import numpy as np
import pytest

from sstrack import tensor as T
from sstrack.boxes import BBox, full_window
from sstrack.gradcheck import check_gradients_sampled
from sstrack.model import (BoxOracleModel, ModelConfig, SearchView,
                           TrackerModel, decode)
from sstrack.tensor import Tensor


@pytest.fixture(scope="module")
def small_cfg():
    return ModelConfig()


@pytest.fixture(scope="module")
def model(small_cfg):
    return TrackerModel(small_cfg, seed=0)


def rand_img(rng, size):
    return rng.random((size, size, 3)).astype(np.float32)


class TestConfig:
    def test_divisibility_enforced(self):
        with pytest.raises(ValueError):
            ModelConfig(patch_size=16, ref_size=50)
        with pytest.raises(ValueError):
            ModelConfig(embed_dim=30, num_heads=4)

    def test_json_round_trip(self, small_cfg):
        assert ModelConfig.from_json(small_cfg.to_json()) == small_cfg

    def test_token_counts(self):
        assert ModelConfig(ref_size=64, patch_size=16).ref_tokens == 16
        assert ModelConfig(search_size=128, patch_size=16).search_tokens == 64


class TestEmbedding:
    def test_token_shapes(self, model, rng):
        tok = model.embed_frame(rand_img(rng, 64), "ref")
        assert tok.shape == (16, 64)
        tok = model.embed_frame(rand_img(rng, 128), "search")
        assert tok.shape == (64, 64)

    def test_identical_images_identical_tokens(self, model, rng):
        img = rand_img(rng, 64)
        a = model.embed_frame(img, "ref")
        b = model.embed_frame(img.copy(), "ref")
        np.testing.assert_array_equal(a.data, b.data)

    def test_wrong_shape_rejected(self, model, rng):
        with pytest.raises(ValueError, match="expected"):
            model.embed_frame(rng.random((64, 32, 3)).astype(np.float32), "ref")
        with pytest.raises(ValueError, match="expected"):
            model.embed_frame(rng.random((64, 64, 1)).astype(np.float32), "ref")

    def test_box_embedding_changes_inside_tokens(self, model, rng):
        img = rand_img(rng, 64)
        plain = model.embed_frame(img, "ref")
        boxed = model.embed_reference(img, BBox(8, 8, 16, 16, "f"))
        diff = np.abs(boxed.data - plain.data).sum(axis=1)
        assert diff[0] > 0          # patch (0,0) center lies inside the box
        assert diff[-1] == 0        # far corner untouched


class TestForward:
    def test_output_shapes_one_ref(self, model, rng):
        ctx = model.make_context([(rand_img(rng, 64), BBox(32, 32, 16, 16, "f"))])
        pm = model.forward(ctx, SearchView(rand_img(rng, 128), full_window((128, 128), 128)))
        assert pm.score.shape == (8, 8)
        assert pm.size.shape == (8, 8, 2)
        assert pm.offset.shape == (8, 8, 2)
        assert pm.search_tokens.shape == (64, 64)

    def test_three_refs_same_map_shape(self, model, rng):
        refs = [(rand_img(rng, 64), BBox(32, 32, 16, 16, "f")) for _ in range(3)]
        pm = model.forward(model.make_context(refs),
                           SearchView(rand_img(rng, 128), full_window((128, 128), 128)))
        assert pm.score.shape == (8, 8)

    def test_score_in_unit_interval(self, model, rng):
        ctx = model.make_context([(rand_img(rng, 64), BBox(32, 32, 16, 16, "f"))])
        pm = model.forward(ctx, SearchView(rand_img(rng, 128), full_window((128, 128), 128)))
        assert np.all(pm.score.data > 0) and np.all(pm.score.data < 1)

    def test_empty_context_rejected(self, model, rng):
        from sstrack.model import TargetContext
        with pytest.raises(ValueError, match="empty"):
            model.forward(TargetContext(3),
                          SearchView(rand_img(rng, 128), full_window((128, 128), 128)))

    def test_deterministic(self, model, rng):
        img_r, img_s = rand_img(rng, 64), rand_img(rng, 128)
        view = SearchView(img_s, full_window((128, 128), 128))
        a = model.forward(model.make_context([(img_r, BBox(32, 32, 10, 10, "f"))]), view)
        b = model.forward(model.make_context([(img_r, BBox(32, 32, 10, 10, "f"))]), view)
        np.testing.assert_array_equal(a.score.data, b.score.data)

    def test_reference_permutation_consistency(self, model, rng):
        refs = [(rand_img(rng, 64), BBox(20 + 8 * i, 30, 12, 12, "f"))
                for i in range(3)]
        view = SearchView(rand_img(rng, 128), full_window((128, 128), 128))
        a = model.forward(model.make_context(refs), view)
        b = model.forward(model.make_context(refs[::-1]), view)
        np.testing.assert_allclose(a.score.data, b.score.data, atol=1e-5)
        np.testing.assert_allclose(a.size.data, b.size.data, atol=1e-5)

    def test_gradients_flow_to_both_embeddings(self, small_cfg, rng):
        model = TrackerModel(small_cfg, seed=1)
        ctx = model.make_context([(rand_img(rng, 64), BBox(32, 32, 16, 16, "f"))])
        pm = model.forward(ctx, SearchView(rand_img(rng, 128), full_window((128, 128), 128)))
        T.sum_(pm.score).backward()
        assert np.abs(model.params["embed.pos.ref"].grad).max() > 0
        assert np.abs(model.params["embed.pos.search"].grad).max() > 0
        assert np.abs(model.params["embed.box"].grad).max() > 0

    def test_max_refs_enforced(self, model, rng):
        from sstrack.model import TargetContext
        ctx = TargetContext(5)
        for _ in range(5):
            ctx.add(model.embed_reference(rand_img(rng, 64), BBox(32, 32, 8, 8, "f")),
                    BBox(32, 32, 8, 8, "f"))
        with pytest.raises(ValueError, match="max_refs"):
            model.forward(ctx, SearchView(rand_img(rng, 128), full_window((128, 128), 128)))


class TestContextFifo:
    def test_keeps_first_drops_second(self, model, rng):
        from sstrack.model import TargetContext
        ctx = TargetContext(3)
        boxes = [BBox(10 * i + 5, 5, 4, 4, "f") for i in range(5)]
        for b in boxes:
            ctx.add(Tensor(np.zeros((1, 1))), b)
        kept = [b for _, b in ctx.entries]
        assert kept == [boxes[0], boxes[3], boxes[4]]


class TestDecode:
    def test_worked_example(self):
        from sstrack.model import PredictionMap
        score = np.zeros((8, 8))
        score[3, 5] = 1.0
        pm = PredictionMap(Tensor(score), Tensor(np.full((8, 8, 2), 0.25)),
                           Tensor(np.full((8, 8, 2), 0.5)), Tensor(np.zeros((64, 1))), 16)
        b = decode(pm, 128, "f")
        assert (b.cx, b.cy, b.w, b.h) == (88.0, 56.0, 32.0, 32.0)

    def test_uniform_map_tie_breaks_to_origin(self):
        from sstrack.model import PredictionMap
        pm = PredictionMap(Tensor(np.zeros((8, 8))), Tensor(np.full((8, 8, 2), 0.5)),
                           Tensor(np.zeros((8, 8, 2))), Tensor(np.zeros((64, 1))), 16)
        b = decode(pm, 128, "f")
        assert (b.cx, b.cy) == (0.0, 0.0)
        assert not b.is_empty

    def test_never_empty(self):
        from sstrack.model import PredictionMap
        pm = PredictionMap(Tensor(np.zeros((4, 4))), Tensor(np.full((4, 4, 2), 0.1)),
                           Tensor(np.zeros((4, 4, 2))), Tensor(np.zeros((16, 1))), 16)
        assert not decode(pm, 64, "f").is_empty


class TestEndToEndGradient:
    def test_two_block_dim16_fd_check(self, rng):
        cfg = ModelConfig(patch_size=8, embed_dim=16, depth=2, num_heads=2,
                          ref_size=16, search_size=16, max_refs=2)
        model = TrackerModel(cfg, seed=3, dtype=np.float64)
        ref = rng.random((16, 16, 3))
        search = rng.random((16, 16, 3))
        box = BBox(8, 8, 6, 6, "f")

        def f():
            ctx = model.make_context([(ref, box)])
            pm = model.forward(ctx, SearchView(search, full_window((16, 16), 16)))
            return T.mean(pm.score) + T.mean(pm.size * pm.size) + T.mean(pm.offset)

        err = check_gradients_sampled(f, list(model.params.values()),
                                      np.random.default_rng(5), n_per_leaf=3)
        assert err < 1e-3


class TestPersistence:
    def test_save_load_round_trip(self, model, tmp_path, rng):
        path = tmp_path / "model.ckpt"
        model.save(path, extra_meta={"epoch": 2})
        loaded, rest, meta = TrackerModel.load(path)
        assert meta["epoch"] == 2
        assert loaded.cfg == model.cfg
        assert rest == {}
        img_r, img_s = rand_img(rng, 64), rand_img(rng, 128)
        view = SearchView(img_s, full_window((128, 128), 128))
        a = model.forward(model.make_context([(img_r, BBox(32, 32, 10, 10, "f"))]), view)
        b = loaded.forward(loaded.make_context([(img_r, BBox(32, 32, 10, 10, "f"))]), view)
        np.testing.assert_array_equal(a.score.data, b.score.data)


class TestBoxOracle:
    def test_decodes_back_to_target(self):
        cfg = ModelConfig()
        oracle = BoxOracleModel(cfg)
        target = BBox(70.3, 41.7, 28.0, 22.0, "f")
        view = SearchView(np.zeros((128, 128, 3), dtype=np.float32),
                          full_window((128, 128), 128), target_box=target)
        pm = oracle.forward(oracle.make_context([]), view)
        back = decode(pm, 128, "f")
        assert (back.cx, back.cy, back.w, back.h) == \
            pytest.approx((target.cx, target.cy, target.w, target.h), abs=1e-12)

    def test_requires_target_box(self):
        cfg = ModelConfig()
        oracle = BoxOracleModel(cfg)
        view = SearchView(np.zeros((128, 128, 3), dtype=np.float32),
                          full_window((128, 128), 128))
        with pytest.raises(ValueError, match="target_box"):
            oracle.forward(oracle.make_context([]), view)
