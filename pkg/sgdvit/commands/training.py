import os
import logging
import argparse

from ..model import SGDViT
from ..config import Variant
from ..tracking import train_toy, write_loss_log
from ..evaluation import write_summary, plot_curves
from ..tracking.ablation import run_ablations
from .command import BaseCommand, add_data_arguments, load_training_data

# add class into this list to enable command
__all__ = (
    "TrainToy",
    "Ablate",
)

log = logging.getLogger(__name__)

LOSS_LOG_FILENAME = "loss.csv"


class TrainToy(BaseCommand):
    name = "train-toy"
    help = "Overfit the model on one sequence and write a checkpoint with its loss log"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        add_data_arguments(parser)
        parser.add_argument("--checkpoint", help="Checkpoint to write (paths.checkpoint)")
        parser.add_argument("--out", help="Directory for the loss log (paths.output)")

    def run(self) -> None:
        name, frames, boxes = load_training_data(self.args, self.config)

        train_config = self.config.train
        model = SGDViT(self.config.model, seed=train_config.seed)

        result = train_toy(model, frames, boxes, train_config, self.config.tracker)

        out = self.output_dir()
        write_loss_log(os.path.join(out, LOSS_LOG_FILENAME), result.records)

        checkpoint = self.checkpoint_path()
        if os.path.dirname(checkpoint):
            os.makedirs(os.path.dirname(checkpoint), exist_ok=True)

        model.save(
            checkpoint,
            {"sequence": name, "iterations": train_config.iterations, "seed": train_config.seed},
        )

        log.info(
            f"saved {checkpoint}, loss {result.initial_loss:.4f} -> {result.final_loss:.4f}"
        )


class Ablate(BaseCommand):
    name = "ablate"
    help = "Train and track every model variant with the same seed and data"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        add_data_arguments(parser)
        parser.add_argument(
            "--variants",
            default=",".join(v.value for v in Variant),
            help="Comma-separated variants to run",
        )
        parser.add_argument("--out", help="Directory for summary.csv and plots (paths.output)")
        parser.add_argument("--no-plots", action="store_true", help="Skip SVG plots")

    def run(self) -> None:
        variants = [v.strip() for v in self.args.variants.split(",") if v.strip()]

        _, frames, boxes = load_training_data(self.args, self.config)

        records = run_ablations(
            variants,
            frames,
            boxes,
            self.config.model,
            self.config.train,
            self.config.tracker,
        )

        for kind, record in records.items():
            log.info(
                f"{kind.value}: {len(record.audit.attention)} attention tensors, "
                f"{len(record.audit.encoder_ffn)} encoder ffn tensors, "
                f"{record.audit.total} parameters"
            )

        reports = {kind.value: record.metrics for kind, record in records.items()}

        out = self.output_dir()
        write_summary(os.path.join(out, "summary.csv"), reports)
        if not self.args.no_plots:
            plot_curves(out, reports)
