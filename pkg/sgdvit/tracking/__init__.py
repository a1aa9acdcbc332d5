from .geometry import BBox, Crop, GridGeometry, crop_frame, crop_sides, hanning_window
from .tracker import (
    Tracker,
    FrameTokens,
    TrackerError,
    TrackerState,
    decode_box,
    select_cell,
    write_token_log,
)
from .loss import LossTerms, toy_loss, iou_loss, box_to_grid, positive_cells
from .train import NumericalError, TrainResult, ToyTrainer, train_toy, write_loss_log
