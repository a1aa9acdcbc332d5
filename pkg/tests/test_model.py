import numpy as np
import pytest

from numpy.testing import assert_allclose, assert_array_equal

from sgdvit.config import Variant, UnknownVariantError
from sgdvit.autodiff import Tensor, GradTape, ShapeError, make_rng, gradcheck, flop_counter
from sgdvit.model import (
    SGDViT,
    Level,
    Backbone,
    TilingError,
    AdjustSampler,
    SaliencyMining,
    TokenEmbedding,
    TrackingHeads,
    SaliencyFilterTransformer,
    coverage,
    detokenize,
    sft_decode,
    sft_encode,
    plan_tokens,
    embed_tokens,
    mine_saliency,
    force_density,
    normalize_crop,
    cross_correlate,
    force_decisions,
    gumbel_binarize,
    partition_and_score,
)
from sgdvit.tracking import BBox, toy_loss
from sgdvit.model.backbone import branch_channels
from sgdvit.tracking.ablation import audit_parameters

GRID = 16
WINDOW = 4


def build(config, variant, seed=0):
    return SGDViT(config.replace(variant=variant.value), seed=seed)


class TestBackbone:
    def test_output_sizes(self, rng):
        backbone = Backbone(16, rng, (8, 8, 16, 16))

        assert backbone.output_sizes == {127: 6, 287: 26}

    def test_forward_shapes(self, rng, make_crop):
        backbone = Backbone(16, rng, (8, 8, 16, 16))

        assert backbone(make_crop(127)).shape == (16, 6, 6)
        assert backbone(make_crop(287)).shape == (16, 26, 26)

    def test_unsupported_crop_size(self, rng, make_crop):
        with pytest.raises(ShapeError):
            Backbone(16, rng, (8, 8, 16, 16))(make_crop(128))

    def test_normalize_crop(self):
        pixels = np.full((4, 4, 3), 255, dtype=np.uint8)

        out = normalize_crop(pixels)

        assert out.shape == (3, 4, 4)
        assert out[0, 0, 0] == pytest.approx((1.0 - 0.485) / 0.229, rel=1e-5)

    def test_adjust_branches(self, rng):
        sampler = AdjustSampler(16, rng)
        feat = Tensor(rng.normal(size=(16, 6, 6)))

        assert branch_channels(16) == [5, 5, 6]
        assert [len(layers) for layers in sampler.branches] == [1, 2, 3]
        assert sampler(feat).shape == (16, 6, 6)
        assert sampler(feat, GRID).shape == (16, GRID, GRID)

    def test_adjust_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            AdjustSampler(16, rng)(Tensor(np.ones((8, 6, 6))))


class TestSaliencyMining:
    def test_shapes(self, rng):
        search = Tensor(rng.normal(size=(16, 26, 26)))
        template = Tensor(rng.normal(size=(16, 6, 6)))

        s1 = cross_correlate(search, template)
        artifacts = SaliencyMining(16, 21, rng)(s1)

        assert s1.shape == (16, 21, 21)
        assert artifacts.s2.shape == (16, 21, 21)
        assert artifacts.fl.shape == (16, 21, 21)
        assert artifacts.m.shape == (1, 21, 21)

    def test_wrong_input_size(self, rng):
        with pytest.raises(ShapeError):
            SaliencyMining(16, 21, rng)(Tensor(np.ones((16, 20, 20))))

    def test_zero_correlation_gives_zero_outputs(self, rng):
        # fresh layers have zero biases
        artifacts = mine_saliency(Tensor(np.zeros((16, 21, 21))), SaliencyMining(16, 21, rng))

        assert not artifacts.s2.data.any()
        assert not artifacts.fl.data.any()
        assert not artifacts.m.data.any()

    def test_saliency_gradient_reaches_correlation(self, rng, f64):
        mining = SaliencyMining(8, 9, rng)
        s1 = Tensor(rng.normal(size=(8, 9, 9)))
        weights = Tensor(rng.normal(size=(1, 9, 9)))

        error = gradcheck(
            lambda s1: (mine_saliency(s1, mining).m * weights).sum(), [s1], samples=30, rng=rng
        )

        assert error < 1e-4


class TestGumbel:
    def test_hard_values_are_binary(self, rng):
        mask = gumbel_binarize(Tensor(rng.normal(size=(1, 8, 8))), 1.0, rng)

        assert set(np.unique(mask.hard)) <= {0.0, 1.0}
        assert_array_equal(mask.values.data, mask.hard)
        assert np.all((mask.soft.data > 0) & (mask.soft.data < 1))

    def test_keep_rate_of_neutral_map(self, rng):
        mask = gumbel_binarize(Tensor(np.zeros((100, 100))), 1.0, rng)

        assert mask.hard.mean() == pytest.approx(0.5, abs=0.02)

    def test_keep_rate_follows_logit(self, rng):
        # the difference of two Gumbel draws is logistic, so P(keep) = sigmoid(2m)
        mask = gumbel_binarize(Tensor(np.full((100, 100), 0.5)), 1.0, rng)

        assert mask.hard.mean() == pytest.approx(1 / (1 + np.exp(-1.0)), abs=0.02)

    def test_seeded_draws_repeat(self):
        m = Tensor(np.zeros((16, 16)))

        first = gumbel_binarize(m, 1.0, make_rng(3)).hard
        second = gumbel_binarize(m, 1.0, make_rng(3)).hard

        assert_array_equal(first, second)

    def test_noiseless_path_thresholds_at_zero(self, rng):
        m = rng.normal(size=(16, 16))

        mask = gumbel_binarize(Tensor(m), 0.5)

        assert_array_equal(mask.hard, (m > 0).astype(mask.hard.dtype))

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_temperature_must_be_positive(self, tau):
        with pytest.raises(ValueError):
            gumbel_binarize(Tensor(np.zeros((4, 4))), tau)

    def test_multi_channel_map_rejected(self):
        with pytest.raises(ShapeError):
            gumbel_binarize(Tensor(np.zeros((2, 4, 4))), 1.0)


class TestTokens:
    @pytest.mark.parametrize("k", range(17))
    def test_token_count_and_coverage(self, k):
        fine = force_decisions(np.zeros((4, 4)), k)

        origins = plan_tokens(fine, WINDOW)

        assert len(origins) == 16 + 3 * k
        assert_array_equal(coverage(origins, GRID), np.ones((GRID, GRID), dtype=np.int64))

    def test_fine_sub_patches_are_row_major(self):
        fine = np.zeros((4, 4), dtype=bool)
        fine[0, 1] = True

        origins = plan_tokens(fine, WINDOW)

        assert origins[0].level is Level.COARSE
        assert [(o.y0, o.x0, o.size) for o in origins[1:5]] == [
            (0, 4, 2),
            (0, 6, 2),
            (2, 4, 2),
            (2, 6, 2),
        ]
        assert origins[5].window_col == 2

    def test_centres(self):
        coarse, *_ = plan_tokens(np.zeros((4, 4), dtype=bool), WINDOW)
        fine = plan_tokens(np.ones((4, 4), dtype=bool), WINDOW)[3]

        assert coarse.centre == (1.5, 1.5)
        assert fine.centre == (2.5, 2.5)

    def test_partition_threshold_is_inclusive(self):
        mask = np.zeros((GRID, GRID))
        mask[0:2, 0:4] = 1
        mask[4:6, 4:7] = 1

        scores = partition_and_score(mask, WINDOW, theta=0.5)

        assert scores.sums[0, 0] == 8
        assert scores.fine[0, 0]
        assert not scores.fine[1, 1]
        assert scores.k_fine == 1

    def test_partition_grid_must_divide(self):
        with pytest.raises(ShapeError):
            partition_and_score(np.zeros((10, 10)), WINDOW)

    def test_force_decisions_breaks_ties_row_major(self):
        means = np.zeros((4, 4))
        means[3, 3] = 1.0

        fine = force_decisions(means, 3)

        assert fine[3, 3]
        assert fine[0, 0] and fine[0, 1]
        assert fine.sum() == 3

    def test_force_decisions_range(self):
        with pytest.raises(ValueError):
            force_decisions(np.zeros((4, 4)), 17)

    def test_force_density(self):
        fine = force_density(4, 0.5)

        assert fine.sum() == 8
        assert fine[:2].all()
        assert not fine[2:].any()

        with pytest.raises(ValueError):
            force_density(4, 1.5)

    @pytest.mark.parametrize("k", [0, 5, 16])
    def test_embedding_shapes(self, rng, k):
        embedding = TokenEmbedding(16, WINDOW, rng)
        feat = Tensor(rng.normal(size=(16, GRID, GRID)))
        fine = force_decisions(rng.random((4, 4)), k)

        tokens = embedding(feat, fine, Tensor(np.ones((GRID, GRID))))

        assert tokens.tokens.shape == (16 + 3 * k, 16)
        assert tokens.n_tokens == 16 + 3 * k
        assert tokens.k_fine == k

    def test_embedding_rejects_partial_decisions(self, rng):
        with pytest.raises(ShapeError):
            TokenEmbedding(16, WINDOW, rng)(Tensor(np.ones((16, GRID, GRID))), np.zeros((3, 4)))

    def test_detokenize_broadcasts_footprints(self):
        fine = np.zeros((4, 4), dtype=bool)
        fine[0, 0] = True
        origins = plan_tokens(fine, WINDOW)
        values = np.arange(len(origins), dtype=float)[:, None] * np.ones((1, 3))

        out = detokenize(Tensor(values), origins, GRID).data

        assert out.shape == (3, GRID, GRID)
        # sub-patch 1 of the fine window, then the next coarse window
        assert out[0, 1, 3] == 1
        assert out[0, 3, 3] == 3
        assert_array_equal(out[:, 0:4, 4:8], 4)
        assert_array_equal(out[:, 12:, 12:], len(origins) - 1)

    def test_detokenize_detects_holes(self):
        origins = plan_tokens(np.zeros((4, 4), dtype=bool), WINDOW)[:-1]

        with pytest.raises(TilingError) as info:
            detokenize(Tensor(np.ones((15, 2))), origins, GRID)

        assert info.value.uncovered == 16

    def test_detokenize_detects_overlaps(self):
        origins = plan_tokens(np.zeros((4, 4), dtype=bool), WINDOW)
        origins = origins + origins[:1]

        with pytest.raises(TilingError) as info:
            detokenize(Tensor(np.ones((17, 2))), origins, GRID)

        assert info.value.overlapped == 16


class TestSaliencyMask:
    def test_straight_through_gradient_reaches_the_map(self, rng, f64):
        tau = 0.5
        embedding = TokenEmbedding(16, WINDOW, rng)
        feat = Tensor(rng.normal(size=(16, GRID, GRID)))
        m = Tensor(rng.normal(size=(1, GRID, GRID)), requires_grad=True)
        coarse = np.zeros((GRID // WINDOW, GRID // WINDOW), dtype=bool)

        with GradTape() as tape:
            mask = gumbel_binarize(m, tau)
            tokens = embed_tokens(feat, coarse, embedding, mask.values, positional=False)
            tape.backward(tokens.tokens.sum())

        # every cell sits in one coarse token and counts 1 / w^2 of its occupancy
        s = 1 / (1 + np.exp(-2 * m.data / tau))
        expected = embedding.saliency_embedding.data.sum() / WINDOW ** 2 * (2 / tau) * s * (1 - s)

        assert_allclose(m.grad, expected, rtol=1e-8)
        assert np.all(m.grad != 0)

    def test_forward_values_are_hard(self, rng, f64):
        embedding = TokenEmbedding(16, WINDOW, rng)
        feat = Tensor(rng.normal(size=(16, GRID, GRID)))
        m = Tensor(rng.normal(size=(1, GRID, GRID)))
        coarse = np.zeros((GRID // WINDOW, GRID // WINDOW), dtype=bool)

        mask = gumbel_binarize(m, 0.5)
        with_mask = embed_tokens(feat, coarse, embedding, mask.values, positional=False)
        without = embed_tokens(feat, coarse, embedding, positional=False)

        occupancy = mask.hard.reshape(4, WINDOW, 4, WINDOW).mean(axis=(1, 3)).reshape(-1, 1)
        assert_allclose(
            with_mask.tokens.data - without.tokens.data,
            occupancy * embedding.saliency_embedding.data,
            atol=1e-12,
        )

    def test_saliency_head_trains_through_the_mask(self, tiny_config, f64, make_crop):
        model = build(tiny_config, Variant.SAT_DYN)
        features = model.template_features(make_crop(127))

        with GradTape() as tape:
            out = model(features, make_crop(287), decisions=force_density(4, 0.5))
            tape.backward(out.heads.cls.sum() + out.heads.reg.sum())

        assert np.abs(model.mining.saliency.weight.grad).sum() > 0
        assert np.abs(model.embedding.saliency_embedding.grad).sum() > 0


class TestTransformer:
    DIM = 16

    @pytest.fixture
    def sft(self, f64, rng):
        return SaliencyFilterTransformer(self.DIM, 2, rng, ffn_mult=2)

    def tokens(self, rng, n):
        return Tensor(rng.normal(size=(n, self.DIM)))

    def test_zero_attention_leaves_normalized_queries(self, sft, rng):
        sft.encoder[0].mha.wc.data[:] = 0.0
        m3 = self.tokens(rng, 10)

        out = sft_encode(m3, self.tokens(rng, 30), sft)

        x = m3.data
        centered = x - x.mean(axis=-1, keepdims=True)
        expected = centered / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + 1e-5)
        assert_allclose(out.data, expected, atol=1e-10)

    @pytest.mark.parametrize("n", [1, 7, 25])
    def test_token_count_is_preserved(self, sft, rng, n):
        m3 = self.tokens(rng, n)

        m4 = sft_encode(m3, self.tokens(rng, 30), sft)
        out = sft_decode(m4, self.tokens(rng, 36), sft)

        assert m4.shape == (n, self.DIM)
        assert out.shape == (n, self.DIM)

    def test_key_value_order_does_not_matter(self, sft, rng):
        m3, m2, m1 = self.tokens(rng, 9), self.tokens(rng, 30), self.tokens(rng, 36)
        m2_shuffled = Tensor(m2.data[rng.permutation(30)])
        m1_shuffled = Tensor(m1.data[rng.permutation(36)])

        m4 = sft_encode(m3, m2, sft)
        assert_allclose(sft_encode(m3, m2_shuffled, sft).data, m4.data, atol=1e-10)
        assert_allclose(sft_decode(m4, m1_shuffled, sft).data, sft_decode(m4, m1, sft).data, atol=1e-10)

    def test_width_mismatch(self, sft, rng):
        with pytest.raises(ShapeError):
            sft_encode(self.tokens(rng, 4), Tensor(np.ones((5, 8))), sft)

    def test_gradcheck(self, sft, rng):
        m3, m2, m1 = self.tokens(rng, 6), self.tokens(rng, 12), self.tokens(rng, 9)
        weights = self.tokens(rng, 6)

        error = gradcheck(
            lambda m3, m2, m1: (sft(m3, m2, m1) * weights).sum(),
            [m3, m2, m1],
            samples=20,
            rng=rng,
        )

        assert error < 1e-4


class TestHeads:
    def test_shapes_and_non_negative_distances(self, rng):
        heads = TrackingHeads(16, rng, cls_bias=2.0)

        out = heads(Tensor(rng.normal(size=(16, GRID, GRID))))

        assert out.cls.shape == (1, GRID, GRID)
        assert out.reg.shape == (4, GRID, GRID)
        assert np.all(out.reg.data >= 0)
        assert heads.cls_out.bias.data[0] == 2.0


class TestForward:
    @pytest.fixture
    def crops(self, make_crop):
        return make_crop(127), make_crop(287)

    @pytest.mark.parametrize("variant", list(Variant))
    def test_head_shapes(self, tiny_config, crops, variant):
        model = build(tiny_config, variant)
        template, search = crops

        out = model(model.template_features(template), search)

        assert out.heads.cls.shape == (1, GRID, GRID)
        assert out.heads.reg.shape == (4, GRID, GRID)

    def test_unknown_variant(self, tiny_config):
        with pytest.raises(UnknownVariantError):
            SGDViT(tiny_config.replace(variant="SAT_FAST"))

    def test_uniform_variant_keeps_coarse_tokens(self, tiny_config, crops):
        model = build(tiny_config, Variant.SAT)
        template, search = crops

        out = model(model.template_features(template), search, rng=make_rng(0))

        assert out.tokens.n_tokens == 16
        assert out.tokens.k_fine == 0

    def test_dynamic_token_law(self, tiny_config, crops):
        model = build(tiny_config, Variant.SAT_DYN)
        template, search = crops

        out = model(model.template_features(template), search, rng=make_rng(0))

        k = partition_and_score(out.mask.hard, WINDOW, tiny_config.theta).k_fine
        assert out.tokens.n_tokens == 16 + 3 * k
        assert out.saliency_grid.shape == (1, GRID, GRID)

    def test_all_salient_dynamic_matches_all_fine_uniform(self, tiny_config, crops):
        # identical seeds give identical weights; only the token plan differs by variant
        dynamic = build(tiny_config, Variant.SAT_DYN)
        uniform = build(tiny_config, Variant.SAT)
        template, search = crops
        fine = np.ones((4, 4), dtype=bool)

        a = dynamic(dynamic.template_features(template), search, decisions=fine)
        b = uniform(uniform.template_features(template), search, decisions=fine)

        assert a.tokens.n_tokens == b.tokens.n_tokens == 64
        assert_allclose(a.heads.cls.data, b.heads.cls.data)
        assert_allclose(a.heads.reg.data, b.heads.reg.data)

    def test_noiseless_forward_is_deterministic(self, tiny_config, crops):
        model = build(tiny_config, Variant.SAT_DYN)
        template, search = crops
        features = model.template_features(template)

        first = model(features, search)
        second = model(features, search)

        assert_array_equal(first.heads.cls.data, second.heads.cls.data)
        assert_array_equal(first.mask.hard, second.mask.hard)

    def test_baseline_has_no_attention_work(self, tiny_config, crops):
        model = build(tiny_config, Variant.BASELINE)
        template, search = crops
        features = model.template_features(template)

        with flop_counter() as report:
            model(features, search)

        assert report.get("attention_qk") == 0
        assert report.get("attention_av") == 0
        assert report.get("projection") == 0
        assert report.child("encoder").total == 0
        assert report.child("heads").total > 0

    def test_checkpoint_round_trip(self, tiny_config, tmp_path):
        model = build(tiny_config, Variant.SAT_DYN, seed=4)
        path = str(tmp_path / "model.sgd")

        model.save(path, {"iterations": 0})
        loaded = SGDViT.load(path)

        assert loaded.config == model.config
        for name, array in model.state_dict().items():
            assert_array_equal(loaded.state_dict()[name], array)

    def test_frozen_weights_are_read_only(self, tiny_config):
        model = build(tiny_config, Variant.BASELINE).freeze()

        with pytest.raises(ValueError):
            model.heads.cls_out.bias.data[0] = 1.0


class TestParameterAudit:
    def test_baseline_has_no_attention(self, tiny_config):
        audit = audit_parameters(build(tiny_config, Variant.BASELINE))

        assert audit.attention == []

    def test_similarity_variant_has_encoder_ffn(self, tiny_config):
        audit = audit_parameters(build(tiny_config, Variant.SIT))

        assert audit.attention
        assert audit.encoder_ffn

    def test_filtering_encoder_has_no_ffn(self, tiny_config):
        audit = audit_parameters(build(tiny_config, Variant.SAT))

        assert audit.attention
        assert audit.encoder_ffn == []

    def test_dynamic_tokens_add_no_parameters(self, tiny_config):
        uniform = audit_parameters(build(tiny_config, Variant.SAT))
        dynamic = audit_parameters(build(tiny_config, Variant.SAT_DYN))

        assert uniform.shapes == dynamic.shapes
        assert uniform.total == dynamic.total


class TestGradients:
    """
    End-to-end checks of the toy loss, run without Gumbel noise and with fixed window
    decisions. The straight-through mask gradient is exact only while the saliency
    embedding is zero, so the dynamic model zeroes it; the embedding's own gradient is
    still checked.
    """

    TARGET = BBox(7.5, 7.5, 4.0, 4.0)
    SAMPLES = 20

    @pytest.fixture
    def crops(self, f64, make_crop):
        return make_crop(127), make_crop(287)

    @pytest.fixture
    def dynamic(self, tiny_config, f64):
        model = build(tiny_config, Variant.SAT_DYN)
        model.embedding.saliency_embedding.data[:] = 0.0

        return model

    def objective(self, model, crops, decisions=None):
        template, search = crops

        def loss(*_):
            features = model.template_features(template)
            heads = model(features, search, decisions=decisions).heads

            return toy_loss(heads, self.TARGET).total

        return loss

    def check(self, model, crops, name, rng, decisions=None):
        param = dict(model.named_parameters())[name]

        error = gradcheck(
            self.objective(model, crops, decisions), [param], samples=self.SAMPLES, rng=rng
        )

        assert error < 1e-4

    @pytest.mark.parametrize(
        "name",
        [
            "backbone.conv3.weight",
            "adjust.branches.2.1.weight",
            "mining.mlp.fc1.weight",
            "mining.features.weight",
            "embedding.coarse.weight",
            "embedding.fine.weight",
            "embedding.saliency_embedding",
            "sft.encoder.0.mha.wc",
            "sft.decoder.0.mha.w1.1",
            "sft.decoder.0.ffn.fc1.weight",
            "heads.cls_hidden.weight",
            "heads.reg_out.weight",
        ],
    )
    def test_dynamic_path(self, dynamic, crops, rng, name):
        self.check(dynamic, crops, name, rng, decisions=force_density(4, 0.5))

    @pytest.mark.parametrize(
        "name", ["backbone.conv1.bias", "backbone.conv5.weight", "heads.cls_hidden.weight"]
    )
    def test_baseline(self, tiny_config, crops, rng, name):
        self.check(build(tiny_config, Variant.BASELINE), crops, name, rng)
