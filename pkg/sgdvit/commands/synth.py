import logging
import argparse

from ..data import SynthSpec, write_sequence, generate_sequence
from .command import BaseCommand

# add class into this list to enable command
__all__ = ("Synth",)

log = logging.getLogger(__name__)


class Synth(BaseCommand):
    name = "synth"
    help = "Generate a synthetic sequence directory from a spec"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--spec", default=None, help="Synthetic sequence spec (YAML)")
        parser.add_argument("--out", required=True, help="Sequence directory to write")

    def run(self) -> None:
        spec = SynthSpec.load(self.args.spec) if self.args.spec else SynthSpec()

        frames, boxes = generate_sequence(spec)
        write_sequence(self.args.out, frames, boxes)
