import math

import numpy as np
import pytest

from numpy.testing import assert_allclose, assert_array_equal

from sgdvit.model import SGDViT, HeadOutputs
from sgdvit.config import TrackerConfig
from sgdvit.autodiff import Tensor, gradcheck
from sgdvit.data import SynthSpec, generate_sequence
from sgdvit.evaluation import compute_iou
from sgdvit.tracking import (
    BBox,
    Crop,
    Tracker,
    TrackerError,
    GridGeometry,
    toy_loss,
    iou_loss,
    crop_frame,
    crop_sides,
    box_to_grid,
    decode_box,
    select_cell,
    hanning_window,
    positive_cells,
    write_token_log,
)

GRID = 16


@pytest.fixture
def gradient_frame():
    ys, xs = np.mgrid[0:240, 0:320]
    frame = np.stack([xs % 256, ys, (xs + ys) % 256], axis=-1)

    return frame.astype(np.uint8)


def blank_crop(cx=100.0, cy=80.0, side=287.0, out_size=287):
    return Crop(np.zeros((1, 1, 3)), cx, cy, side, out_size, 0.0)


class TestGeometry:
    def test_box_conversions(self):
        box = BBox.from_xywh(10, 20, 40, 30)

        assert (box.cx, box.cy) == (30, 35)
        assert box.to_xywh() == (10, 20, 40, 30)
        assert box.corners() == (10, 20, 50, 50)

    @pytest.mark.parametrize(
        "box", [BBox(5, 5, 0, 3), BBox(5, 5, 3, -1), BBox(math.nan, 5, 3, 3)]
    )
    def test_degenerate_boxes(self, box):
        assert not box.is_valid

    def test_clamp(self):
        box = BBox(-5, 300, 1, 1000).clamp(320, 240, min_size=4)

        assert box == BBox(0, 240, 4, 240)

    def test_crop_sides(self):
        template, search = crop_sides(BBox(0, 0, 40, 30))

        assert template == pytest.approx(math.sqrt(75 * 65))
        assert search == pytest.approx(template * 287 / 127)

    def test_crop_coordinate_round_trip(self):
        crop = blank_crop(cx=120.5, cy=64.0, side=200.0, out_size=127)

        x, y = crop.to_frame(*crop.from_frame(37.25, 150.0))

        assert (x, y) == (pytest.approx(37.25), pytest.approx(150.0))
        assert crop.to_frame(63, 63) == (120.5, 64.0)

    def test_unit_scale_crop_copies_pixels(self, gradient_frame):
        crop = crop_frame(gradient_frame, 160, 120, 287, 287)

        assert crop.pixels.shape == (287, 287, 3)
        assert_array_equal(crop.pixels[143, 143], gradient_frame[120, 160])
        assert_array_equal(crop.pixels[143 + 10, 143 - 7], gradient_frame[130, 153])

    def test_corner_crop_pads_with_mean(self, gradient_frame):
        crop = crop_frame(gradient_frame, 0, 0, 100, 100)
        mean = gradient_frame.reshape(-1, 3).astype(np.float64).mean(axis=0)

        assert crop.padding_fraction == pytest.approx(0.75)
        assert_array_equal(crop.pixels[0, 0], mean)
        assert_array_equal(crop.pixels[10, 99], mean)
        assert not np.array_equal(crop.pixels[99, 99], mean)

    def test_grid_geometry(self):
        geometry = GridGeometry(GRID)

        assert geometry.offset == 43
        assert geometry.step == pytest.approx(200 / 15)
        assert geometry.to_crop(7.5) == pytest.approx(143)
        assert geometry.to_grid(geometry.to_crop(3.25)) == pytest.approx(3.25)

    def test_hanning_peaks_in_the_centre(self):
        window = hanning_window(GRID)

        assert window.shape == (GRID, GRID)
        assert window[7, 8] == pytest.approx(window.max())
        assert window[0, 0] == 0


class TestSelection:
    def test_no_penalty_is_raw_argmax(self, rng):
        cls = rng.normal(size=(GRID, GRID))

        selection = select_cell(cls, hanning_window(GRID), 0.0)

        assert (selection.row, selection.col) == np.unravel_index(np.argmax(cls), cls.shape)

    def test_full_penalty_picks_the_centre(self, rng):
        selection = select_cell(rng.normal(size=(GRID, GRID)), hanning_window(GRID), 1.0)

        assert (selection.row, selection.col) == (7, 7)
        assert selection.ties == [(7, 7), (7, 8), (8, 7), (8, 8)]

    def test_single_maximum_has_no_ties(self, rng):
        cls = rng.normal(size=(GRID, GRID))

        selection = select_cell(cls, hanning_window(GRID), 0.3)

        assert selection.ties == [(selection.row, selection.col)]

    def test_matches_brute_force(self, rng):
        window = hanning_window(GRID)

        for _ in range(20):
            cls = rng.normal(scale=3.0, size=(GRID, GRID))
            penalty = float(rng.uniform())

            best, cell = -np.inf, None
            for r in range(GRID):
                for c in range(GRID):
                    score = (1 - penalty) / (1 + np.exp(-cls[r, c])) + penalty * window[r, c]
                    if score > best:
                        best, cell = score, (r, c)

            selection = select_cell(cls, window, penalty)

            assert (selection.row, selection.col) == cell
            assert selection.confidence == pytest.approx(1 / (1 + np.exp(-cls[cell])))

    def test_decode_symmetric_distances(self):
        geometry = GridGeometry(GRID)
        reg = np.ones((4, GRID, GRID))

        box = decode_box(reg, 7, 7, geometry, blank_crop())

        assert box.cx == pytest.approx(100 + geometry.to_crop(7) - 143)
        assert box.cy == pytest.approx(80 + geometry.to_crop(7) - 143)
        assert box.w == pytest.approx(2 * geometry.step)
        assert box.h == pytest.approx(2 * geometry.step)

    def test_decode_shifts_towards_the_longer_side(self):
        geometry = GridGeometry(GRID)
        reg = np.ones((4, GRID, GRID))
        reg[2] = 3.0

        box = decode_box(reg, 7, 7, geometry, blank_crop())

        assert box.cx == pytest.approx(100 + geometry.to_crop(8) - 143)
        assert box.w == pytest.approx(4 * geometry.step)


class TestTracker:
    @pytest.fixture
    def model(self, tiny_config):
        return SGDViT(tiny_config, seed=0).freeze()

    def test_degenerate_initial_box(self, model, gradient_frame):
        with pytest.raises(TrackerError):
            Tracker(model).init_template(gradient_frame, BBox(100, 100, 0, 20))

    def test_initial_box_outside_frame(self, model, gradient_frame):
        with pytest.raises(TrackerError):
            Tracker(model).init_template(gradient_frame, BBox(400, 100, 20, 20))

    def test_uninitialized_state(self, model, gradient_frame):
        with pytest.raises(TrackerError):
            Tracker(model).track_frame(gradient_frame, None)

    def test_first_frame_reports_the_given_box(self, model, small_spec):
        frames, boxes = generate_sequence(small_spec)

        results = Tracker(model).run(frames[:1], boxes[0])

        assert results == [(boxes[0], 1.0)]

    def test_runs_are_deterministic(self, model, small_spec):
        frames, boxes = generate_sequence(small_spec)

        first = Tracker(model).run(frames, boxes[0])
        second = Tracker(model).run(frames, boxes[0])

        assert first == second
        assert len(first) == len(frames)
        for box, confidence in first:
            assert box.is_valid
            assert 0.0 <= confidence <= 1.0

    def test_saturated_classifier_tracks_a_static_target(self, tiny_config):
        model = SGDViT(tiny_config.replace(cls_bias=20.0), seed=0)
        model.heads.reg_out.weight.data[:] = 0.0
        model.heads.reg_out.bias.data[:] = 0.0

        spec = SynthSpec(
            frames=2,
            motion="static",
            background=0.0,
            clutter=0,
            noise=0.0,
            base_size=(40.0, 30.0),
            start=(160.0, 120.0),
        )
        frames, boxes = generate_sequence(spec)

        tracker = Tracker(model.freeze(), TrackerConfig(scale_momentum=1.0))
        results = tracker.run(frames, boxes[0])

        predicted, _ = results[1]

        # the window ties the four central cells, whose mean is the crop centre
        assert (predicted.w, predicted.h) == (40.0, 30.0)
        assert predicted.cx == pytest.approx(boxes[1].cx, abs=1e-6)
        assert predicted.cy == pytest.approx(boxes[1].cy, abs=1e-6)
        assert compute_iou(predicted, boxes[1]) > 0.99

    def test_token_log(self, model, small_spec, tmp_path):
        frames, boxes = generate_sequence(small_spec)
        tracker = Tracker(model, log_tokens=True)

        tracker.run(frames, boxes[0])

        log = tracker.token_log
        assert [row.frame for row in log] == list(range(1, len(frames)))
        for row in log:
            assert row.n_tokens == 16 + 3 * row.k_fine
            assert row.encoder_macs > 0 and row.decoder_macs > 0

        # encoder work follows the token count alone
        by_tokens = {}
        for row in log:
            by_tokens.setdefault(row.n_tokens, set()).add(row.encoder_macs)
        assert all(len(macs) == 1 for macs in by_tokens.values())

        path = tmp_path / "tokens.csv"
        write_token_log(str(path), log)
        lines = path.read_text().splitlines()
        assert lines[0] == "frame,k_fine,n_tokens,encoder_macs,decoder_macs"
        assert len(lines) == len(frames)

    def test_token_log_is_off_by_default(self, model, small_spec):
        frames, boxes = generate_sequence(small_spec)
        tracker = Tracker(model)

        tracker.run(frames, boxes[0])

        assert tracker.token_log == []

    def test_dominant_window_keeps_the_centre(self, tiny_config, small_spec):
        model = SGDViT(tiny_config, seed=0)
        model.heads.reg_out.weight.data[:] = 0.0
        model.heads.reg_out.bias.data[:] = 0.0
        frames, boxes = generate_sequence(small_spec)

        results = Tracker(model.freeze(), TrackerConfig(penalty=1.0)).run(frames, boxes[0])

        assert len(results) == len(frames)
        for box, _ in results[1:]:
            assert box.cx == pytest.approx(boxes[0].cx, abs=1e-6)
            assert box.cy == pytest.approx(boxes[0].cy, abs=1e-6)


class TestLoss:
    TARGET = BBox(7.5, 7.5, 4.0, 4.0)

    def perfect_heads(self, target):
        positive = positive_cells(target, GRID)
        x1, y1, x2, y2 = target.corners()
        rows, cols = np.mgrid[0:GRID, 0:GRID]

        cls = np.where(positive, 20.0, -20.0)[None]
        reg = np.stack([cols - x1, rows - y1, x2 - cols, y2 - rows])

        return HeadOutputs(cls=Tensor(cls), reg=Tensor(np.maximum(reg, 0.0)))

    def test_positive_cells(self):
        positive = positive_cells(self.TARGET, GRID)

        assert positive.sum() == 4
        assert positive[7:9, 7:9].all()

    def test_tiny_target_keeps_the_nearest_cell(self):
        positive = positive_cells(BBox(3.2, 4.9, 0.1, 0.1), GRID)

        assert positive.sum() == 1
        assert positive[5, 3]

    def test_perfect_prediction_has_no_loss(self, f64):
        terms = toy_loss(self.perfect_heads(self.TARGET), self.TARGET)

        assert terms.positives == 4
        assert terms.total.item() == pytest.approx(0.0, abs=1e-6)

    def test_sub_cell_target_outside_its_cell(self, f64):
        # only cell (5, 5) is positive and it lies left of and above the box
        target = BBox(5.3, 5.3, 0.2, 0.2)
        heads = self.perfect_heads(target)

        assert_allclose(heads.reg.data[:, 5, 5], [0.0, 0.0, 0.4, 0.4], atol=1e-12)

        terms = toy_loss(heads, target)

        assert terms.positives == 1
        assert terms.reg.item() == pytest.approx(0.0, abs=1e-6)

    def test_sub_cell_target_loss_is_bounded(self, f64):
        target = BBox(5.3, 5.3, 0.2, 0.2)
        positive = positive_cells(target, GRID)

        for value in (0.0, 0.1, 1.0, 5.0):
            reg = Tensor(np.full((4, GRID, GRID), value))

            loss = iou_loss(reg, target, positive).item()

            assert 0.0 <= loss <= 1.0

    def test_collapsed_boxes_have_zero_iou(self, f64):
        heads = self.perfect_heads(self.TARGET)
        heads.reg = Tensor(np.zeros((4, GRID, GRID)))

        terms = toy_loss(heads, self.TARGET)

        assert terms.reg.item() == pytest.approx(1.0)
        assert terms.total.item() == pytest.approx(terms.cls.item() + 2.0)

    def test_target_off_the_grid_is_flagged(self, f64):
        terms = toy_loss(self.perfect_heads(self.TARGET), BBox(-10.0, -10.0, 2.0, 2.0))

        assert terms.flagged
        assert terms.reg is None
        assert terms.total is terms.cls

    def test_box_to_grid_centres_the_target(self):
        geometry = GridGeometry(GRID)
        crop = blank_crop(cx=150.0, cy=90.0, side=143.5)
        box = BBox(150.0, 90.0, 40.0, 20.0)

        grid_box = box_to_grid(box, crop, geometry)

        assert grid_box.cx == pytest.approx(7.5)
        assert grid_box.cy == pytest.approx(7.5)
        assert grid_box.w == pytest.approx(40.0 / (geometry.step * 0.5))

    def test_gradcheck(self, f64, rng):
        cls = Tensor(rng.normal(size=(1, GRID, GRID)))
        reg = Tensor(np.abs(rng.normal(size=(4, GRID, GRID))) + 0.5)

        error = gradcheck(
            lambda cls, reg: toy_loss(HeadOutputs(cls=cls, reg=reg), self.TARGET).total,
            [cls, reg],
            samples=40,
            rng=rng,
        )

        assert error < 1e-4
