"""Network checkpoints.

A checkpoint is an npz archive holding every parameter and buffer as a float64
array plus a ``__manifest__`` entry: a YAML document with the format version,
the window layout, the architecture and training metadata.
"""

from pathlib import Path

import numpy as np
import yaml

from squaremamba.core.window import WindowLayout
from squaremamba.errors import VersionError
from squaremamba.io.io import load_npz, save_npz

VERSION = 1
MANIFEST_KEY = "__manifest__"


def save_checkpoint(path, model, **metadata):
    """Save ``model`` state and architecture

    Parameters
    ----------
    path : str or Path
        destination (npz)
    model : SquareMamba
        network to save
    **metadata
        plain values stored in the manifest (epoch, validation scores...)
    """
    manifest = dict(version=VERSION, model=model.config(), **metadata)
    arrays = {name: value.astype(np.float64) for name, value in model.state_dict().items()}
    arrays[MANIFEST_KEY] = np.array(yaml.safe_dump(manifest, sort_keys=False))
    save_npz(path, arrays)


def read_manifest(path) -> dict:
    arrays = load_npz(path)
    return _manifest(arrays, path)


def _manifest(arrays, path):
    if MANIFEST_KEY not in arrays:
        raise VersionError(f"{path} is not a squaremamba checkpoint (no manifest)")
    manifest = yaml.safe_load(str(arrays[MANIFEST_KEY][()]))
    if manifest.get("version") != VERSION:
        raise VersionError(
            f"{path}: checkpoint format version {manifest.get('version')} "
            f"is not supported (expected {VERSION})"
        )
    return manifest


def load_checkpoint(path, layout: WindowLayout = None):
    """Rebuild the network saved in ``path``

    Parameters
    ----------
    path : str or Path
        checkpoint file
    layout : WindowLayout, optional
        layout the network must match (typically the one of a sample cache)

    Returns
    -------
    tuple
        (SquareMamba, manifest)

    Raises
    ------
    VersionError
        unsupported format, layout mismatch or inconsistent parameters
    """
    from squaremamba.model import SquareMamba

    path = Path(path)
    arrays = load_npz(path)
    manifest = _manifest(arrays, path)
    config = dict(manifest["model"])
    saved_layout = WindowLayout(**config.pop("layout"))
    if layout is not None and saved_layout.to_dict() != layout.to_dict():
        raise VersionError(
            f"checkpoint layout {saved_layout.to_dict()} does not match {layout.to_dict()}"
        )
    model = SquareMamba(layout=saved_layout, **config)
    del arrays[MANIFEST_KEY]
    model.load_state_dict(arrays)
    return model, manifest
