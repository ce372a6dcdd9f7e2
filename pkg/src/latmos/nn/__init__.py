from .backbones import BACKBONES, build_backbone, matched_sizes
from .layers import (Conv2d, CausalAttentionBlock, GRULayer, LayerNorm, Linear, MLPDecoder,
                     SSMLayer, cross_entropy, cross_entropy_backward, softmax)
from .optim import Adam, NonFiniteGradient
from .params import CheckpointError, ParamSet, glorot
