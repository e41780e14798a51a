from squaremamba.autodiff import astensor, functional as F
from squaremamba.core.window import LAYOUT
from squaremamba.model.layers import BatchNorm, Dropout, Linear, Module


class FeatureFusionBlock(Module):
    """Residual per-month channel mixing (7 → hidden → 7) with dropout, followed
    by batch normalization and a fully connected projection of the flattened
    window to a scalar.
    """

    def __init__(self, rng, dropout_rng, layout=LAYOUT, hidden=14, p=0.2, momentum=0.1, eps=1e-5):
        super().__init__()
        self.layout = layout
        self.f1 = Linear(layout.variables, hidden, rng)
        self.drop1 = Dropout(p, dropout_rng)
        self.f2 = Linear(hidden, layout.variables, rng)
        self.drop2 = Dropout(p, dropout_rng)
        self.norm = BatchNorm(layout.variables, momentum=momentum, eps=eps)
        self.fc = Linear(layout.flat, 1, rng)

    def forward(self, f):
        f = astensor(f)
        refined = self.drop2(self.f2(self.drop1(F.activation("gelu", self.f1(f)))))
        fused = self.norm(f + refined)
        flat = fused.reshape(fused.shape[:-2] + (self.layout.flat,))
        out = self.fc(flat)
        return out.reshape(out.shape[:-1])
