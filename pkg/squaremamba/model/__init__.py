from .ffb import FeatureFusionBlock
from .layers import BatchNorm, Conv1d, DepthwiseConv2d, Dropout, Linear, Module
from .network import SquareMamba, ablate
from .seb import SpatialEncodingBlock
from .ssm import SelectiveSSM, selective_scan
from .teb import LocalTimeEncoding, QuantumLocalTimeEncoding, TemporalEncodingBlock
