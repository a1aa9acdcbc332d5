from .module import Module, Parameter, kaiming_uniform
from .layers import (
    MLP,
    Conv2d,
    Linear,
    LayerNorm,
    FeedForward,
    ConvTranspose2d,
    mlp_forward,
    conv_forward,
)
from .attention import MultiHeadAttention, scaled_dot_attention, multi_head_attention
from .positional import sinusoidal_2d, grid_encoding
from .resample import resize_bilinear, interpolation_matrix
