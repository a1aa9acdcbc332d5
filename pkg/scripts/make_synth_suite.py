#!/usr/bin/python3

"""
Writes the training sequence and a held-out sequence whose target grows 1.5x and
whose aspect ratio doubles over the sequence.
"""

import sys
import math
import pathlib
import argparse
import dataclasses

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent))

from sgdvit.data import SynthSpec, write_sequence, generate_sequence  # noqa: E402

DEFAULT_SPEC = "config/synth.example.yaml"

HELD_OUT_SCALE = 1.5
HELD_OUT_ASPECT_RATIO_CHANGE = 2.0

parser = argparse.ArgumentParser(
    prog="make_synth_suite.py", description="Script for generating synthetic sequences"
)
parser.add_argument(
    "--spec", default=DEFAULT_SPEC, help=f"Training sequence spec. Defaults to {DEFAULT_SPEC}"
)
parser.add_argument(
    "--out", default="data", help="Directory for both sequences. Defaults to data"
)
parser.add_argument(
    "--held-out-seed",
    type=int,
    default=None,
    help="Seed of the held-out sequence. Defaults to training seed + 1",
)


def held_out_spec(train: SynthSpec, seed: int) -> SynthSpec:
    # aspect enters both width and height, so w/h changes by aspect^2
    return dataclasses.replace(
        train,
        scale=(1.0, HELD_OUT_SCALE),
        aspect=(1.0, math.sqrt(HELD_OUT_ASPECT_RATIO_CHANGE)),
        seed=seed,
    )


def main() -> None:
    args = parser.parse_args()

    train = SynthSpec.load(args.spec)
    seed = args.held_out_seed if args.held_out_seed is not None else train.seed + 1
    held_out = held_out_spec(train, seed)

    out = pathlib.Path(args.out)
    for name, spec in (("synth_train", train), ("synth_held_out", held_out)):
        spec.validate()

        frames, boxes = generate_sequence(spec)
        write_sequence(str(out / name), frames, boxes)

        print(f"{name}: {len(frames)} frames, last box {boxes[-1]}")


if __name__ == "__main__":
    main()
