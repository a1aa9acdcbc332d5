import os
import logging
import argparse

from ..data import read_boxes, read_groundtruth
from ..config import split_densities
from ..evaluation import report, bench_tokens, write_bench, write_report
from .command import BaseCommand

# add class into this list to enable command
__all__ = (
    "Eval",
    "BenchTokens",
)

log = logging.getLogger(__name__)

BENCH_FILENAME = "bench_tokens.csv"


class Eval(BaseCommand):
    name = "eval"
    help = "Score predicted boxes against ground truth (precision, success)"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--results", required=True, help="Predicted boxes, x,y,w,h per line")
        parser.add_argument("--gt", required=True, help="Ground-truth boxes, x,y,w,h per line")
        parser.add_argument("--out", help="Output directory (paths.output)")
        parser.add_argument("--name", default=None, help="Row name in summary.csv")
        parser.add_argument("--no-plots", action="store_true", help="Skip SVG plots")

    def run(self) -> None:
        predictions = read_boxes(self.args.results)
        groundtruth = read_groundtruth(self.args.gt)

        metrics = report(predictions, groundtruth)

        name = self.args.name or os.path.basename(os.path.dirname(os.path.abspath(self.args.results)))
        write_report(self.output_dir(), name, metrics, plots=not self.args.no_plots)


class BenchTokens(BaseCommand):
    name = "bench-tokens"
    help = "Count encoder and total MACs while forcing the FINE window density"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument(
            "--densities",
            default="0,0.25,0.5,0.75,1",
            help="Comma-separated densities in [0, 1]",
        )
        parser.add_argument("--out", help="Output directory (paths.output)")

    def run(self) -> None:
        densities = split_densities(self.args.densities)

        rows = bench_tokens(self.config.model, densities, seed=self.config.get("train.seed"))

        path = os.path.join(self.output_dir(), BENCH_FILENAME)
        write_bench(path, rows)

        log.info(f"wrote {len(rows)} rows to {path}")
