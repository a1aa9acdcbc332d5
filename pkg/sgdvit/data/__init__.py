from .sequence import (
    DataError,
    Sequence,
    read_boxes,
    write_boxes,
    load_sequence,
    read_groundtruth,
    write_confidences,
)
from .synth import SynthSpec, SynthSpecError, write_sequence, generate_sequence
