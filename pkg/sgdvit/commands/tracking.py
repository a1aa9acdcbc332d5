import os
import logging
import argparse

from typing import List, Tuple, Optional
from concurrent.futures import ThreadPoolExecutor

from ..data import Sequence, load_sequence, write_boxes, write_confidences
from ..model import SGDViT
from ..utils import write_pgm, write_ppm, to_grayscale_u8
from ..config import Variant, ConfigError
from ..autodiff import Tensor
from ..tracking import BBox, Tracker, write_token_log
from ..evaluation import report
from ..model.backbone import normalize_crop
from ..autodiff.serialize import save_tensor
from .command import BaseCommand

# add class into this list to enable command
__all__ = (
    "Track",
    "ExportSaliency",
)

log = logging.getLogger(__name__)

RESULTS_FILENAME = "results.txt"
CONFIDENCE_FILENAME = "confidence.csv"
TOKEN_LOG_FILENAME = "tokens.csv"


def _load_model(path: str) -> SGDViT:
    if not os.path.exists(path):
        raise ConfigError("paths.checkpoint", f"checkpoint {path} does not exist")

    return SGDViT.load(path)


class Track(BaseCommand):
    name = "track"
    help = "Run the tracker over sequence directories and write per-frame boxes"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument(
            "--seq", action="append", default=[], help="Sequence directory, can be repeated"
        )
        parser.add_argument("--out", help="Output directory (paths.output)")
        parser.add_argument("--checkpoint", help="Checkpoint to load (paths.checkpoint)")
        parser.add_argument(
            "--workers", type=int, default=None, help="Sequences tracked in parallel"
        )
        parser.add_argument(
            "--token-log",
            action="store_true",
            help=f"Also write per-frame token counts and transformer MACs to {TOKEN_LOG_FILENAME}",
        )

    def run(self) -> None:
        paths: List[str] = self.args.seq or [self.config.get("paths.sequence")]
        paths = [p for p in paths if p]
        if not paths:
            raise ConfigError("paths.sequence", "no sequence given, pass --seq")

        sequences = [load_sequence(p) for p in paths]
        model = _load_model(self.checkpoint_path()).freeze()

        if self.args.token_log and model.variant not in (Variant.SAT, Variant.SAT_DYN):
            log.warning(
                f"{model.variant.value} has no token plan, {TOKEN_LOG_FILENAME} stays empty"
            )

        out = self.output_dir()
        targets = [
            out if len(sequences) == 1 else os.path.join(out, seq.name) for seq in sequences
        ]

        workers = self.args.workers or min(len(sequences), os.cpu_count() or 1)
        log.info(f"tracking {len(sequences)} sequences with {workers} workers")

        with ThreadPoolExecutor(max_workers=workers) as pool:
            # list() re-raises the first worker failure
            list(pool.map(lambda job: self._track_one(model, *job), zip(sequences, targets)))

    def _track_one(self, model: SGDViT, sequence: Sequence, out: str) -> None:
        tracker = Tracker(model, self.config.tracker, log_tokens=self.args.token_log)

        results = tracker.run(sequence.frames(), sequence.groundtruth[0])
        boxes = [box for box, _ in results]

        os.makedirs(out, exist_ok=True)
        write_boxes(os.path.join(out, RESULTS_FILENAME), boxes)
        write_confidences(os.path.join(out, CONFIDENCE_FILENAME), [c for _, c in results])
        if self.args.token_log:
            write_token_log(os.path.join(out, TOKEN_LOG_FILENAME), tracker.token_log)

        if len(sequence.groundtruth) == len(boxes):
            metrics = report(boxes, sequence.groundtruth)
            log.info(
                f"{sequence.name}: {len(boxes)} frames, mean iou {metrics.mean_iou:.3f}, "
                f"precision20 {metrics.precision20:.3f}"
            )
        else:
            log.info(f"{sequence.name}: {len(boxes)} frames tracked")


class ExportSaliency(BaseCommand):
    name = "export-saliency"
    help = "Write the saliency map of one search frame as a raw tensor and a PGM image"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--seq", help="Sequence directory (paths.sequence)")
        parser.add_argument("--frame", type=int, default=1, help="Search frame index")
        parser.add_argument("--out", help="Output directory (paths.output)")
        parser.add_argument("--checkpoint", help="Checkpoint to load (paths.checkpoint)")

    def run(self) -> None:
        path: Optional[str] = self.args.seq or self.config.get("paths.sequence") or None
        if path is None:
            raise ConfigError("paths.sequence", "no sequence given, pass --seq")

        sequence = load_sequence(path)
        index = self.args.frame
        if not 0 <= index < len(sequence):
            raise ConfigError("--frame", f"frame {index} outside 0..{len(sequence) - 1}")

        model = _load_model(self.checkpoint_path())
        if model.variant not in (Variant.SAT, Variant.SAT_DYN):
            raise ConfigError(
                "model.variant", f"{model.variant.value} has no saliency mining network"
            )

        tracker = Tracker(model, self.config.tracker)
        state = tracker.init_template(sequence.frame(0), sequence.groundtruth[0])

        previous = self._previous_box(sequence, index)
        crop = tracker.search_crop(sequence.frame(index), previous)

        outputs = model(state.template, Tensor(normalize_crop(crop.pixels)))
        assert outputs.saliency is not None and outputs.saliency_grid is not None

        out = self.output_dir()
        stem = os.path.join(out, f"saliency_{index:04d}")

        save_tensor(f"{stem}.sgdt", outputs.saliency.m.data[0])
        write_pgm(f"{stem}.pgm", to_grayscale_u8(outputs.saliency_grid.data[0]))
        write_ppm(os.path.join(out, f"search_{index:04d}.ppm"), crop.pixels)

        log.info(f"saved saliency of frame {index} to {stem}.sgdt and {stem}.pgm")

    @staticmethod
    def _previous_box(sequence: Sequence, index: int) -> BBox:
        boxes: Tuple[BBox, ...] = tuple(sequence.groundtruth)
        if index > 0 and len(boxes) > index - 1:
            return boxes[index - 1]

        return boxes[0]
