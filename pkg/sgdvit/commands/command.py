from __future__ import annotations

import os
import abc
import logging
import argparse

from typing import Any, Dict, List, Type, Tuple, Optional

import numpy as np

from ..data import SynthSpec, DataError, load_sequence, generate_sequence
from ..config import Config
from ..tracking import BBox

log = logging.getLogger(__name__)


class Command(type):
    def __init__(cls: type, name: str, bases: Tuple[type, ...], dct: Dict[str, Any]):
        super().__init__(name, bases, dct)  # type: ignore

        for base in cls.__mro__:
            if "name" in base.__dict__:
                # subclasses replace the command they inherit the name from
                cls._registry[getattr(cls, "name")] = cls  # type: ignore

                return


class BaseCommand(metaclass=Command):
    _registry: Dict[str, Type[BaseCommand]] = {}

    name: str
    help: str = ""

    def __init__(self, args: argparse.Namespace, config: Config) -> None:
        self.args = args
        self.config = config

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        pass

    @staticmethod
    def registry() -> Dict[str, Type[BaseCommand]]:
        return dict(sorted(BaseCommand._registry.items()))

    @staticmethod
    def get(name: str) -> Type[BaseCommand]:
        return BaseCommand._registry[name]

    @abc.abstractmethod
    def run(self) -> None:
        raise NotImplementedError

    def output_dir(self) -> str:
        path: str = getattr(self.args, "out", None) or self.config.get("paths.output")
        os.makedirs(path, exist_ok=True)

        return path

    def checkpoint_path(self) -> str:
        path: str = getattr(self.args, "checkpoint", None) or self.config.get("paths.checkpoint")

        return path


def add_data_arguments(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--spec", help="Synthetic sequence spec (YAML)")
    source.add_argument("--seq", help="Sequence directory with PPM frames and groundtruth.txt")


def load_training_data(
    args: argparse.Namespace, config: Config
) -> Tuple[str, List[np.ndarray], List[BBox]]:
    """Frames and boxes from --spec, --seq or paths.sequence, in that order."""

    spec_path: Optional[str] = getattr(args, "spec", None)
    seq_path: Optional[str] = getattr(args, "seq", None) or config.get("paths.sequence") or None

    if spec_path is not None:
        frames, boxes = generate_sequence(SynthSpec.load(spec_path))

        return os.path.splitext(os.path.basename(spec_path))[0], frames, boxes

    if seq_path is not None:
        sequence = load_sequence(seq_path)
        if len(sequence.groundtruth) != len(sequence):
            raise DataError(
                f"{seq_path}: training needs a box for every frame, "
                f"got {len(sequence.groundtruth)} boxes for {len(sequence)} frames"
            )

        return sequence.name, list(sequence.frames()), sequence.groundtruth

    log.info("no sequence given, using the default synthetic sequence")

    frames, boxes = generate_sequence(SynthSpec())

    return "synth", frames, boxes
