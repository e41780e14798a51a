from .checkpoint import load_checkpoint, read_manifest, save_checkpoint
from .io import COLUMNS, GridCube, dump_yaml, load_npz, load_records, manifest, save_npz
