import numpy as np
import pandas as pd
import pytest

from squaremamba import Block, Sequence, Window
from squaremamba.blocks import (
    SpatialAugmentation,
    Standardization,
    TargetAttachment,
    augment_spatial,
    impute_frame,
    standardize_window,
)
from squaremamba.core.window import VARIABLES
from squaremamba.dataset import build_splits, load_cache, save_cache
from squaremamba.errors import ParseError, SchemaError, ValidationError
from squaremamba.io import COLUMNS, GridCube, load_records, manifest
from squaremamba.simulations import synthetic_dataset

CENTER = (-29.25, 153.25)
HEADER = ",".join(COLUMNS)
ROW = "2000-01,-29.25,153.25,80,26,14,20,18,45,110,0.5"


def write(path, rows, header=HEADER):
    path.write_text("\n".join([header, *rows]) + "\n")
    return path


def write_records(path, records):
    records.to_csv(path, index=False, na_rep="NA", float_format="%.10g")
    return path


@pytest.fixture(scope="module")
def records():
    # 1979-2007 covers the three default splits
    return synthetic_dataset(start=1979, end=2007, seed=1)


@pytest.fixture(scope="module")
def dataset(records, tmp_path_factory):
    path = write_records(tmp_path_factory.mktemp("data") / "records.csv", records)
    return build_splits(load_records(path), CENTER, show_progress=False)


# records
# -------


def test_single_record(tmp_path):
    records = load_records(write(tmp_path / "one.csv", [ROW]))
    assert len(records) == 1
    record = records.iloc[0]
    assert record["month"] == pd.Period("2000-01", freq="M")
    assert (record["lat"], record["lon"]) == CENTER
    assert record["pre"] == 80.0 and record["spei1"] == 0.5
    assert record["line"] == 2


def test_missing_values(tmp_path):
    row = "2000-01,-29.25,153.25,NA,26,14,20,18,45,110,"
    record = load_records(write(tmp_path / "na.csv", [row])).iloc[0]
    assert np.isnan(record["pre"]) and np.isnan(record["spei1"])
    assert record["tmx"] == 26.0


def test_duplicate_rows(tmp_path):
    with pytest.raises(ValidationError, match="lines 2 and 3"):
        load_records(write(tmp_path / "dup.csv", [ROW, ROW]))


def test_parse_errors(tmp_path):
    with pytest.raises(ParseError) as ex:
        load_records(write(tmp_path / "date.csv", [ROW, ROW.replace("2000-01", "2000-13")]))
    assert ex.value.line == 3

    with pytest.raises(ParseError, match="pre") as ex:
        load_records(write(tmp_path / "number.csv", [ROW.replace(",80,", ",eighty,")]))
    assert ex.value.line == 2

    with pytest.raises(ParseError, match="lat"):
        load_records(write(tmp_path / "lat.csv", [ROW.replace("-29.25", "")]))


def test_schema_error(tmp_path):
    header = HEADER.replace(",spei1", "")
    with pytest.raises(SchemaError, match="spei1"):
        load_records(write(tmp_path / "schema.csv", [ROW.rsplit(",", 1)[0]], header=header))


def test_off_grid(tmp_path):
    rows = [ROW, ROW.replace("2000-01", "2000-02").replace("153.25", "153.3")]
    with pytest.raises(ValidationError, match="grid"):
        load_records(write(tmp_path / "grid.csv", rows))


def test_sorted_records_and_manifest(records, tmp_path):
    shuffled = records.sample(frac=1.0, random_state=0)
    loaded = load_records(write_records(tmp_path / "shuffled.csv", shuffled))
    assert len(loaded) == 9 * 29 * 12
    keys = loaded[["lat", "lon", "month"]]
    assert keys.equals(keys.sort_values(["lat", "lon", "month"]).reset_index(drop=True))

    summary = manifest(loaded)
    assert summary["rows"] == len(loaded)
    assert len(summary["locations"]) == 9
    assert summary["start"] == "1979-01" and summary["end"] == "2007-12"
    assert summary["missing_values"]["spei1"] == 9 * 15


def test_sixteen_months_give_one_window(records, tmp_path):
    short = records[records["date"] <= "1980-04"]
    loaded = load_records(write_records(tmp_path / "short.csv", short))
    assert len(loaded) == 9 * 16
    dataset = build_splits(loaded, CENTER, show_progress=False)
    assert dataset.counts() == {"train": 1, "validation": 0, "test": 0}
    assert dataset.train.months[0] == pd.Period("1980-04", freq="M")


# spatial augmentation
# --------------------


def test_augmentation_stacks_cells(records, tmp_path):
    loaded = load_records(write_records(tmp_path / "records.csv", records))
    cube = GridCube(loaded)
    month = pd.Period("1990-07", freq="M")
    tz = augment_spatial(cube, CENTER, month).reshape(15, 7, 3, 3)

    history = pd.period_range(end=month - 1, periods=15, freq="M")
    for (i, j), (dlat, dlon) in cube.layout.offsets().items():
        cell = loaded[
            np.isclose(loaded["lat"], CENTER[0] + dlat)
            & np.isclose(loaded["lon"], CENTER[1] + dlon)
            & loaded["month"].isin(history)
        ]
        np.testing.assert_equal(tz[:, :, i, j], cell[list(VARIABLES)].to_numpy())
    # row 0 is north
    assert cube.layout.offsets()[(0, 1)] == (0.5, 0.0)


def test_missing_corner_copied_from_nearest(records, tmp_path):
    northwest = np.isclose(records["lat"], CENTER[0] + 0.5) & np.isclose(
        records["lon"], CENTER[1] - 0.5
    )
    loaded = load_records(write_records(tmp_path / "corner.csv", records[~northwest]))
    tz = augment_spatial(GridCube(loaded), CENTER, pd.Period("1990-07", freq="M"))
    np.testing.assert_equal(tz[:, 0, 0], tz[:, 0, 1])


def test_only_center_present(records, tmp_path):
    center = np.isclose(records["lat"], CENTER[0]) & np.isclose(records["lon"], CENTER[1])
    loaded = load_records(write_records(tmp_path / "center.csv", records[center]))
    tz = augment_spatial(GridCube(loaded), CENTER, pd.Period("1990-07", freq="M"))
    np.testing.assert_equal(tz, np.broadcast_to(tz[:, 1:2, 1:2], tz.shape))


def test_impute_partial_gaps():
    frame = np.random.default_rng(0).normal(size=(15, 7, 3, 3))
    frame[3, 2, 0, 0] = np.nan
    frame[3, 2, 0, 1] = np.nan
    filled = impute_frame(frame)
    # (0, 1) and (1, 0) are equally close, (0, 1) first in row-major order
    assert filled[3, 2, 0, 0] == frame[3, 2, 1, 0]
    assert filled[3, 2, 0, 1] == frame[3, 2, 0, 2]
    assert np.isfinite(filled).all()
    np.testing.assert_equal(filled[4:], frame[4:])


def test_incomplete_center_history():
    frame = np.ones((15, 7, 3, 3))
    frame[5, 0, 1, 1] = np.nan
    with pytest.raises(ValidationError, match="centre"):
        impute_frame(frame)

    window = Window(center=CENTER, target_month=pd.Period("2000-04", freq="M"), frame=frame)
    kept = Sequence([SpatialAugmentation()]).run([window], show_progress=False)
    assert kept == []
    assert window.discard_reason == "incomplete centre history"


# standardization
# ---------------


def test_standardize_window():
    generator = np.random.default_rng(0)
    tz_raw = generator.normal(10, 3, size=(105, 3, 3))
    tz_raw.reshape(15, 7, 3, 3)[:, 4] = 7.5
    z, tz = standardize_window(tz_raw)
    np.testing.assert_equal(tz[:, 1, 1], z)

    centre = z.reshape(15, 7)
    np.testing.assert_equal(centre[:, 4], 0.0)
    others = [k for k in range(7) if k != 4]
    np.testing.assert_allclose(centre[:, others].mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(centre[:, others].std(axis=0), 1.0, atol=1e-12)

    # neighbours share the centre map
    raw = tz_raw.reshape(15, 7, 3, 3)
    mean, sigma = raw[:, 0, 1, 1].mean(), raw[:, 0, 1, 1].std()
    np.testing.assert_allclose(tz.reshape(15, 7, 3, 3)[:, 0, 0, 2], (raw[:, 0, 0, 2] - mean) / sigma)


# splits
# ------


def test_split_boundaries(dataset):
    assert dataset.counts() == {"train": 9, "validation": 300, "test": 24}
    assert dataset.train.months[0] == pd.Period("1980-04", freq="M")
    assert dataset.train.months[-1] == pd.Period("1980-12", freq="M")
    assert dataset.validation.months[0] == pd.Period("1981-01", freq="M")
    assert dataset.test.months[0] == pd.Period("2006-01", freq="M")
    assert dataset["val"] is dataset.validation
    assert dataset.location == CENTER
    with pytest.raises(KeyError):
        dataset["holdout"]


def test_samples_consistent(dataset, records):
    for name in ("train", "validation", "test"):
        samples = dataset[name]
        assert samples.z.shape == (len(samples), 105)
        assert samples.tz.shape == (len(samples), 105, 3, 3)
        np.testing.assert_equal(samples.tz[:, :, 1, 1], samples.z)

    center = records[np.isclose(records["lat"], CENTER[0]) & np.isclose(records["lon"], CENTER[1])]
    targets = center.set_index("date")["spei1"]
    expected = targets[[str(m) for m in dataset.test.months]].to_numpy()
    np.testing.assert_allclose(dataset.test.target, expected, rtol=1e-9)


def test_full_record_counts(tmp_path):
    records = synthetic_dataset(tmp_path / "full.csv", seed=2)
    dataset = build_splits(load_records(tmp_path / "full.csv"), CENTER, show_progress=False)
    assert dataset.counts() == {"train": 945, "validation": 300, "test": 216}
    assert sum(dataset.counts().values()) == len(records) // 9 - 15


def test_neighbour_gaps_are_imputed(tmp_path):
    records = synthetic_dataset(start=1990, end=1992, gap_fraction=0.2, seed=3)
    assert records["pre"].isna().any()
    path = write_records(tmp_path / "gaps.csv", records)
    dataset = build_splits(load_records(path), CENTER, show_progress=False)
    assert len(dataset.validation) == 36 - 15
    assert np.isfinite(dataset.validation.tz).all()


def test_unknown_location(tmp_path):
    loaded = load_records(write(tmp_path / "one.csv", [ROW]))
    with pytest.raises(ValidationError, match="no records"):
        build_splits(loaded, (0.25, 0.25), show_progress=False)


def test_pipeline_deterministic(dataset, records, tmp_path):
    path = write_records(tmp_path / "records.csv", records)
    again = build_splits(load_records(path), CENTER, show_progress=False)
    for name in ("train", "validation", "test"):
        np.testing.assert_equal(again[name].tz, dataset[name].tz)
        np.testing.assert_equal(again[name].target, dataset[name].target)

    save_cache(tmp_path / "a", dataset)
    save_cache(tmp_path / "b", again)
    first = (tmp_path / "a" / "samples.npz").read_bytes()
    assert first == (tmp_path / "b" / "samples.npz").read_bytes()


def test_cache_round_trip(dataset, tmp_path):
    save_cache(tmp_path, dataset, source="records.csv")
    loaded, cache_manifest = load_cache(tmp_path)
    assert cache_manifest["source"] == "records.csv"
    assert cache_manifest["counts"] == dataset.counts()
    assert loaded.location == dataset.location
    assert loaded.layout == dataset.layout
    for name in ("train", "validation", "test"):
        np.testing.assert_equal(loaded[name].z, dataset[name].z)
        np.testing.assert_equal(loaded[name].tz, dataset[name].tz)
        assert loaded[name].months.equals(dataset[name].months)


def test_missing_cache(tmp_path):
    with pytest.raises(ValidationError, match="ingest"):
        load_cache(tmp_path)


# blocks
# ------


class Failing(Block):
    def run(self, window):
        raise ValueError("boom")


def test_block_errors_name_the_block():
    window = Window(center=CENTER, target_month=pd.Period("2000-04", freq="M"))
    with pytest.raises(ValueError, match=r"\[Failing\] boom"):
        Sequence([Failing()]).run([window], show_progress=False)


def test_window_attributes():
    window = Window(center=CENTER, target_month=pd.Period("2000-04", freq="M"), frame=np.zeros((15, 7, 3, 3)))
    assert window.months[0] == pd.Period("1999-01", freq="M")
    assert window.months[-1] == pd.Period("2000-03", freq="M")
    window.z = np.ones(3)
    assert "z" in window.computed
    copy = window.copy()
    copy.z[0] = 5
    assert window.z[0] == 1
    with pytest.raises(AttributeError):
        window.tz


def test_missing_target_discarded(tmp_path):
    cube = GridCube(load_records(write(tmp_path / "one.csv", [ROW])))
    window = Window(center=CENTER, target_month=pd.Period("2000-02", freq="M"))
    processed = TargetAttachment(cube)(window)
    assert processed.discard and processed.discard_reason == "missing target"
    assert not window.discard

    window = Window(center=CENTER, target_month=pd.Period("2000-01", freq="M"))
    assert TargetAttachment(cube)(window).target == 0.5


def test_sequence_keeps_order():
    frame = np.random.default_rng(0).normal(size=(15, 7, 3, 3))
    windows = [
        Window(center=CENTER, target_month=pd.Period("2000-01", freq="M") + i, frame=frame.copy())
        for i in range(4)
    ]
    windows[1].frame[0, 0, 1, 1] = np.nan
    sequence = Sequence([SpatialAugmentation(), Standardization()])
    kept = sequence.run(windows, show_progress=False)
    assert [w.target_month for w in kept] == [windows[i].target_month for i in (0, 2, 3)]
    assert sequence.discards == {"SpatialAugmentation": {"incomplete centre history": 1}}
    assert "Standardization" in str(sequence)
