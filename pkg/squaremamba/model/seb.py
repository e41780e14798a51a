from squaremamba.autodiff import astensor, functional as F
from squaremamba.core.window import LAYOUT
from squaremamba.errors import DimensionError
from squaremamba.model.layers import DepthwiseConv2d, Module


class SpatialEncodingBlock(Module):
    """Residual mixing of each window channel with its spatial neighbourhood.

    ``s = z + maxpool(leaky_relu_0.2(depthwise_conv2x2(Tz)))``: every one of the
    105 month-variable channels owns a 2×2 kernel sliding over the 3×3
    neighbourhood, the four responses (one per quadrant) are max-pooled.

    Parameters
    ----------
    rng : np.random.Generator
        generator used for initialization
    layout : WindowLayout, optional
        window layout, by default the 15×7 layout with a 3×3 neighbourhood
    """

    def __init__(self, rng, layout=LAYOUT):
        super().__init__()
        self.layout = layout
        self.conv = DepthwiseConv2d(layout.flat, rng, size=layout.window - 1)

    def forward(self, z, tz):
        z, tz = astensor(z), astensor(tz)
        w = self.layout.window
        if z.shape[-1] != self.layout.flat or tz.shape[-3:] != (self.layout.flat, w, w):
            raise DimensionError(
                f"spatial encoding expects z (..., {self.layout.flat}) and "
                f"Tz (..., {self.layout.flat}, {w}, {w}), got {z.shape} and {tz.shape}"
            )
        mixed = F.activation("leaky_relu_0.2", self.conv(tz))
        return z + F.maxpool_spatial(mixed)
