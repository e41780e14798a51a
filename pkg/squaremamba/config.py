from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

import yaml

from squaremamba.errors import ConfigurationError

package_name = "squaremamba"


@dataclass
class SplitConfig:
    """Year ranges (inclusive) deciding the split of each target month"""

    train: Tuple[int, int] = (1901, 1980)
    validation: Tuple[int, int] = (1981, 2005)
    test: Tuple[int, int] = (2006, 2023)

    def __post_init__(self):
        self.train = tuple(self.train)
        self.validation = tuple(self.validation)
        self.test = tuple(self.test)
        ranges = sorted([self.train, self.validation, self.test])
        for (a0, a1), (b0, _) in zip(ranges[:-1], ranges[1:]):
            if a1 >= b0:
                raise ConfigurationError(f"split year ranges overlap: {ranges}")
        for start, end in ranges:
            if start > end:
                raise ConfigurationError(f"empty year range ({start}, {end})")

    def split_of(self, year: int) -> Optional[str]:
        """Name of the split containing ``year``, None if outside all ranges"""
        for name in ("train", "validation", "test"):
            start, end = getattr(self, name)
            if start <= year <= end:
                return name
        return None


@dataclass
class TrainConfig:
    """Training protocol: AdamW, cosine annealing, early stopping"""

    epochs: int = 250
    batch_size: int = 32
    seed: int = 0
    lr: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    patience: int = 30
    min_delta: float = 1e-5
    no_seb: bool = False
    no_qltem: bool = False
    eval_batch_size: int = 256

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        # batchnorm needs two samples per batch
        if self.batch_size < 2:
            raise ConfigurationError(
                f"batch_size must be >= 2, got {self.batch_size}"
            )
        if self.eval_batch_size < 1:
            raise ConfigurationError("eval_batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")


@dataclass
class RunConfig:
    """Effective configuration of one command-line invocation"""

    command: str = None
    data: Optional[str] = None
    lat: Optional[float] = None
    lon: Optional[float] = None
    out: str = "."
    checkpoint: Optional[str] = None
    split: str = "test"
    reference: Optional[str] = None
    train: TrainConfig = field(default_factory=TrainConfig)
    splits: SplitConfig = field(default_factory=SplitConfig)

    @property
    def out_path(self) -> Path:
        return Path(self.out)

    @property
    def checkpoint_path(self) -> Path:
        if self.checkpoint is not None:
            return Path(self.checkpoint)
        return self.out_path / "checkpoint.npz"

    @property
    def location(self):
        if self.lat is None or self.lon is None:
            return None
        return (float(self.lat), float(self.lon))

    def to_dict(self):
        return asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(
            _plain(self.to_dict()), sort_keys=False, default_flow_style=False
        )


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_RUN_KEYS = {f.name for f in fields(RunConfig)} - {"train", "splits"}
# command-line flags that live in TrainConfig
_FLAG_TO_TRAIN = {"seed", "no_seb", "no_qltem", "epochs", "batch_size"}


class ConfigManager:
    """
    Configuration and log-file registry of the package.

    Attributes
    ----------
    logs : list
        paths of files receiving every console message (see
        :py:mod:`squaremamba.console_utils`)

    Methods
    -------
    load(path)
        reads a YAML configuration file into a dict
    resolve(flags, config_file=None)
        builds the effective :py:class:`RunConfig` with precedence
        flag > config file > built-in default
    """

    def __init__(self):
        self.logs = []

    def add_log(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if str(path) not in self.logs:
            self.logs.append(str(path))

    def clear_logs(self):
        self.logs = []

    def load(self, path) -> dict:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file {path} does not exist")
        with path.open(mode="r") as file:
            config = yaml.safe_load(file.read())
        if config is None:
            return {}
        if not isinstance(config, dict):
            raise ConfigurationError(f"config file {path} must hold a mapping")
        return config

    def resolve(self, flags: dict, config_file=None) -> RunConfig:
        file_values = self.load(config_file) if config_file is not None else {}

        unknown = set(file_values) - _RUN_KEYS - {"train", "splits"}
        if unknown:
            raise ConfigurationError(
                f"unknown configuration keys: {', '.join(sorted(unknown))}"
            )
        train_values = dict(file_values.get("train", None) or {})
        unknown = set(train_values) - _TRAIN_KEYS
        if unknown:
            raise ConfigurationError(
                f"unknown train configuration keys: {', '.join(sorted(unknown))}"
            )
        splits_values = dict(file_values.get("splits", None) or {})
        unknown = set(splits_values) - {"train", "validation", "test"}
        if unknown:
            raise ConfigurationError(
                f"unknown splits configuration keys: {', '.join(sorted(unknown))}"
            )

        run_values = {k: v for k, v in file_values.items() if k in _RUN_KEYS}
        for key, value in flags.items():
            if value is None:
                continue
            if key in _FLAG_TO_TRAIN:
                train_values[key] = value
            elif key in _RUN_KEYS:
                run_values[key] = value
            else:
                raise ConfigurationError(f"unknown flag '{key}'")

        try:
            train = TrainConfig(**train_values)
            splits = SplitConfig(**splits_values)
        except TypeError as ex:
            raise ConfigurationError(str(ex)) from ex

        return replace(RunConfig(**run_values), train=train, splits=splits)
