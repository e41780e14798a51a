import argparse
import sys

from squaremamba import CONFIG
from squaremamba.blocks import impute_frame, standardize_window
from squaremamba.console_utils import error, info, log
from squaremamba.core.window import LAYOUT
from squaremamba.dataset import build_splits, load_cache, save_cache
from squaremamba.errors import ConfigurationError, InputError, ValidationError
from squaremamba.io import GridCube, load_checkpoint, load_records, manifest
from squaremamba.metrics import categorize, compare_reference, emit_series
from squaremamba.simulations import synthetic_dataset
from squaremamba.training import evaluate, train

INPUT_EXIT = 2
INTERNAL_EXIT = 3

# flags resolved against the configuration file
SHARED_FLAGS = (
    "data",
    "lat",
    "lon",
    "out",
    "seed",
    "no_seb",
    "no_qltem",
    "epochs",
    "batch_size",
    "checkpoint",
    "split",
    "reference",
)


def _shared_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--data", type=str, help="climate record file", default=None)
    shared.add_argument("--lat", type=float, help="latitude of the centre cell", default=None)
    shared.add_argument("--lon", type=float, help="longitude of the centre cell", default=None)
    shared.add_argument("--out", type=str, help="output folder", default=None)
    shared.add_argument("--seed", type=int, help="random seed", default=None)
    shared.add_argument(
        "--no-seb", action="store_const", const=True, default=None, help="bypass the spatial encoding block"
    )
    shared.add_argument(
        "--no-qltem", action="store_const", const=True, default=None, help="drop the quantum time encoding"
    )
    shared.add_argument("--epochs", type=int, help="maximum number of epochs", default=None)
    shared.add_argument("--batch-size", type=int, help="training batch size", default=None)
    shared.add_argument("--checkpoint", type=str, help="checkpoint file", default=None)
    shared.add_argument("--config", type=str, help="YAML configuration file", default=None)
    return shared


def _require(config, *names):
    missing = [f"--{name}" for name in names if getattr(config, name) is None]
    if missing:
        raise ConfigurationError(f"{config.command} requires {', '.join(missing)}")


# commands
# --------


def _ingest(config):
    _require(config, "data", "lat", "lon")
    records = load_records(config.data)
    dataset = build_splits(records, config.location, splits=config.splits)
    save_cache(config.out_path, dataset, source=str(config.data), data=manifest(records))
    log(str(dataset))


def _train(config):
    dataset, _ = load_cache(config.out_path)
    result = train(dataset, config.train, out=config.out_path)
    info(f"checkpoint written to {result.checkpoint} (epoch {result.best_epoch})")


def _evaluate(config):
    dataset, _ = load_cache(config.out_path)
    model, _ = load_checkpoint(config.checkpoint_path, layout=dataset.layout)
    split = "validation" if config.split == "val" else config.split
    report = evaluate(model, dataset[split], batch_size=config.train.eval_batch_size)
    log(report.table(stratified=split == "test"))
    info(f"category agreement {report.category_agreement:.4f}")
    series = config.out_path / f"series_{split}.csv"
    emit_series(report, series)
    info(f"series written to {series}")
    if config.reference is not None:
        log(
            compare_reference(
                report,
                config.reference,
                no_seb=not model.use_seb,
                no_qltem=not model.use_qltem,
            )
        )


def _predict(config):
    _require(config, "data", "lat", "lon")
    model, _ = load_checkpoint(config.checkpoint_path, layout=LAYOUT)
    d = predict_file(model, config.data, config.location)
    log(f"{d:.4f} {categorize(d)}")


def _simulate(config):
    _require(config, "lat", "lon")
    path = config.out_path / "synthetic.csv"
    synthetic_dataset(path, center=config.location, seed=config.train.seed)
    info(f"synthetic records written to {path}")


COMMANDS = {
    "ingest": (_ingest, "build the sample cache of a location"),
    "train": (_train, "train a network on the sample cache"),
    "evaluate": (_evaluate, "evaluate a checkpoint on a split"),
    "predict": (_predict, "forecast the month following a 15-month window file"),
    "simulate": (_simulate, "write a synthetic climate record file"),
}


def predict_file(model, path, location, layout=LAYOUT) -> float:
    """Forecast of the month following the window held in ``path``

    The file must hold every cell of the neighbourhood over the last
    ``layout.months`` months it covers; missing neighbour values are imputed.

    Raises
    ------
    ValidationError
        rows are missing or the centre history is incomplete
    """
    records = load_records(path)
    if len(records) == 0:
        raise ValidationError(f"{path} holds no records")
    cube = GridCube(records, layout=layout)
    if len(cube.months) < layout.months:
        raise ValidationError(
            f"window needs {layout.months} months, {path} covers {len(cube.months)}"
        )
    target_month = cube.months[-1] + 1
    months = set(cube.months[-layout.months :])

    center = cube.key(location)
    present = set(zip(records["lat"], records["lon"], records["month"]))
    missing = []
    for dlat, dlon in layout.offsets().values():
        cell = cube.key((center[0] + dlat, center[1] + dlon))
        absent = sorted(m for m in months if (cell[0], cell[1], m) not in present)
        if absent:
            missing.append(f"{cell}: {', '.join(str(m) for m in absent)}")
    if missing:
        raise ValidationError("missing rows for " + "; ".join(missing))

    tz_raw = impute_frame(cube.frame(center, target_month))
    z, tz = standardize_window(tz_raw.reshape(layout.flat, layout.window, layout.window), layout)
    return float(model.predict(z, tz))


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="squaremamba", description="Drought index forecasting"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    shared = _shared_parser()

    for name, (_, description) in COMMANDS.items():
        command = subparsers.add_parser(name=name, help=description, parents=[shared])
        if name == "evaluate":
            command.add_argument(
                "--split",
                type=str,
                choices=["train", "validation", "val", "test"],
                default=None,
                help="split to evaluate, by default test",
            )
            command.add_argument(
                "--reference",
                type=str,
                default=None,
                help="location whose published scores are printed alongside",
            )

    args = parser.parse_args(argv)
    flags = {name: getattr(args, name, None) for name in SHARED_FLAGS}
    flags["command"] = args.command

    CONFIG.clear_logs()
    try:
        config = CONFIG.resolve(flags, args.config)
        config.out_path.mkdir(parents=True, exist_ok=True)
        CONFIG.add_log(config.out_path / "run.log")
        log(f"squaremamba {args.command}\n{config.dump()}")
        COMMANDS[args.command][0](config)
    except (InputError, ConfigurationError, OSError) as ex:
        error(str(ex))
        return INPUT_EXIT
    except Exception as ex:
        error(f"{type(ex).__name__}: {ex}")
        return INTERNAL_EXIT
    finally:
        CONFIG.clear_logs()
    return 0


if __name__ == "__main__":
    sys.exit(main())
