from .heads import HeadOutputs, TrackingHeads
from .backbone import (
    Backbone,
    AdjustSampler,
    adjust_sample,
    normalize_crop,
    extract_features,
)
from .saliency import SaliencyMining, SaliencyArtifacts, mine_saliency, cross_correlate
from .embedding import (
    Level,
    TokenSet,
    BinaryMask,
    TokenOrigin,
    TilingError,
    WindowScores,
    TokenEmbedding,
    coverage,
    detokenize,
    plan_tokens,
    embed_tokens,
    force_density,
    force_decisions,
    gumbel_binarize,
    partition_and_score,
)
from .transformer import SaliencyFilterTransformer, sft_decode, sft_encode
from .tracker_net import SGDViT, ForwardOutputs, TemplateFeatures
