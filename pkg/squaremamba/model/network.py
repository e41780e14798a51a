import copy

import numpy as np

from squaremamba.autodiff import Tensor, astensor, functional as F
from squaremamba.core.window import LAYOUT, WindowLayout
from squaremamba.errors import DimensionError
from squaremamba.model.ffb import FeatureFusionBlock
from squaremamba.model.layers import Module
from squaremamba.model.seb import SpatialEncodingBlock
from squaremamba.model.teb import TemporalEncodingBlock


class SquareMamba(Module):
    """Spatio-temporal drought index forecaster.

    The flattened window ``z`` (month-major, 15 × 7) and its spatial
    neighbourhood ``Tz`` go through the spatial encoding block, are reshaped to
    15 × 7, encoded by the temporal encoding block and fused to one value
    bounded to (-3, 3) by a scaled tanh.

    Every parameter is created whatever the ablation flags, so that all
    configurations of one seed share their initialization and checkpoint layout.

    Parameters
    ----------
    seed : int, optional
        initialization and dropout seed, by default 0
    layout : WindowLayout, optional
        window layout, by default 15 months × 7 variables, 3×3 neighbourhood
    state_size : int, optional
        selective scan state size, by default 16
    expand : int, optional
        channel expansion of the local time encoders, by default 2
    ffb_hidden : int, optional
        hidden width of the feature fusion block, by default 14
    dropout : float, optional
        dropout probability of the feature fusion block, by default 0.2
    momentum : float, optional
        batch normalization momentum, by default 0.1
    eps : float, optional
        batch normalization epsilon, by default 1e-5
    use_seb : bool, optional
        whether the spatial encoding block is applied, by default True
    use_qltem : bool, optional
        whether the quantum branch of the temporal encoding is applied, by default True
    """

    def __init__(
        self,
        seed: int = 0,
        layout: WindowLayout = LAYOUT,
        state_size: int = 16,
        expand: int = 2,
        ffb_hidden: int = 14,
        dropout: float = 0.2,
        momentum: float = 0.1,
        eps: float = 1e-5,
        use_seb: bool = True,
        use_qltem: bool = True,
    ):
        super().__init__()
        self.layout = layout
        self.hparams = dict(
            seed=int(seed),
            state_size=state_size,
            expand=expand,
            ffb_hidden=ffb_hidden,
            dropout=dropout,
            momentum=momentum,
            eps=eps,
        )
        seb_rng, teb_rng, ffb_rng, dropout_rng = [
            np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)
        ]
        self.use_seb = use_seb
        self.seb = SpatialEncodingBlock(seb_rng, layout=layout)
        self.teb = TemporalEncodingBlock(
            teb_rng,
            layout=layout,
            quantum=use_qltem,
            expand=expand,
            state_size=state_size,
            momentum=momentum,
            eps=eps,
        )
        self.ffb = FeatureFusionBlock(
            ffb_rng,
            dropout_rng,
            layout=layout,
            hidden=ffb_hidden,
            p=dropout,
            momentum=momentum,
            eps=eps,
        )

    @property
    def use_qltem(self) -> bool:
        return self.teb.quantum

    def _inactive(self):
        return set() if self.use_seb else {"seb"}

    def forward(self, z, tz) -> Tensor:
        """Drought index of a batch of windows.

        Parameters
        ----------
        z : Tensor
            standardized windows, shape (B, 105)
        tz : Tensor
            spatially augmented windows, shape (B, 105, 3, 3)

        Returns
        -------
        Tensor
            forecasts, shape (B,)
        """
        z, tz = astensor(z), astensor(tz)
        flat, w = self.layout.flat, self.layout.window
        if z.ndim != 2 or z.shape[1] != flat or tz.shape != (z.shape[0], flat, w, w):
            raise DimensionError(
                f"expected z (B, {flat}) and Tz (B, {flat}, {w}, {w}), "
                f"got {z.shape} and {tz.shape}"
            )
        s = self.seb(z, tz) if self.use_seb else z
        s = s.reshape(z.shape[0], self.layout.months, self.layout.variables)
        return F.activation("scaled_tanh_3", self.ffb(self.teb(s)))

    def predict(self, z, tz, batch_size=256) -> np.ndarray:
        """Evaluation-mode forecasts as a numpy array, computed in fixed-size batches

        A single window (z of shape (105,)) gives a 0-d array.
        """
        z, tz = np.asarray(z, dtype=np.float64), np.asarray(tz, dtype=np.float64)
        single = z.ndim == 1
        if single:
            z, tz = z[None], tz[None]
        was_training = self.training
        self.eval()
        try:
            outputs = [
                self.forward(Tensor(z[i : i + batch_size]), Tensor(tz[i : i + batch_size])).values
                for i in range(0, len(z), batch_size)
            ]
        finally:
            self.train(was_training)
        d = np.concatenate(outputs) if outputs else np.zeros(0)
        return d[0] if single else d

    def config(self) -> dict:
        """Architecture description written to checkpoints"""
        return dict(
            layout=self.layout.to_dict(),
            use_seb=self.use_seb,
            use_qltem=self.use_qltem,
            **self.hparams,
        )


def ablate(model: SquareMamba, no_seb: bool = False, no_qltem: bool = False) -> SquareMamba:
    """Configured view of ``model`` sharing its parameters.

    Parameters
    ----------
    model : SquareMamba
        network to configure
    no_seb : bool, optional
        bypass the spatial encoding block (its output is replaced by z)
    no_qltem : bool, optional
        drop the quantum branch of the temporal encoding block
    """
    configured = copy.copy(model)
    configured.teb = copy.copy(model.teb)
    configured.use_seb = not no_seb
    configured.teb.quantum = not no_qltem
    return configured
