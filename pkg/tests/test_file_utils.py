import numpy as np
import pandas as pd
import pytest
from openpyxl import load_workbook

from batteryttt.core.features import truncate_partial
from batteryttt.core.model import ModelState
from batteryttt.exceptions import ParseError
from batteryttt.schemas.features import QdLinearFeature, VoltageGrid
from batteryttt.utils.file_utils import (
    labels_path_for,
    load_checkpoint,
    read_cycles_csv,
    read_features,
    read_labels_csv,
    save_checkpoint,
    save_table_excel,
    sidecar_path_for,
    write_cycles_csv,
    write_features,
    write_labels_csv,
)

HEADER = "cell_id,cycle,idx,t_s,voltage_v,current_a,temp_c,q_ah\n"


class TestCycles:
    def test_round_trip(self, tmp_path, small_fleet_data):
        records, _ = small_fleet_data
        path = write_cycles_csv(tmp_path / "cycles.csv", records)
        back = read_cycles_csv(path)
        assert [(r.cell_id, r.cycle) for r in back] == [(r.cell_id, r.cycle) for r in records]
        for a, b in zip(records, back):
            np.testing.assert_array_equal(b.t_s, a.t_s)
            np.testing.assert_array_equal(b.voltage_v, a.voltage_v)
            np.testing.assert_array_equal(b.q_ah, a.q_ah)

    def test_cycles_of_one_cell_stay_separate(self, tmp_path, small_fleet_data):
        records, _ = small_fleet_data
        path = write_cycles_csv(tmp_path / "cycles.csv", records)
        back = read_cycles_csv(path)
        assert len(back) == len(records)
        assert len({(r.cell_id, r.cycle) for r in back}) == len(records)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        assert read_cycles_csv(path) == []

    def test_non_numeric_location(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            HEADER
            + "c1,1,0,0.0,3.0,0.5,25,0.0\n"
            + "c1,1,1,1.0,abc,0.5,25,0.001\n"
        )
        with pytest.raises(ParseError) as exc:
            read_cycles_csv(path)
        assert exc.value.line == 3
        assert exc.value.column == "voltage_v"

    def test_non_monotone_time(self, tmp_path):
        path = tmp_path / "back.csv"
        path.write_text(
            HEADER
            + "c1,1,0,0.0,3.0,0.5,25,0.0\n"
            + "c1,1,1,1.0,3.1,0.5,25,0.001\n"
            + "c1,1,2,1.0,3.2,0.5,25,0.002\n"
        )
        with pytest.raises(ParseError) as exc:
            read_cycles_csv(path)
        assert (exc.value.line, exc.value.column) == (4, "t_s")

    def test_missing_column(self, tmp_path):
        path = tmp_path / "narrow.csv"
        path.write_text("cell_id,cycle\nc1,1\n")
        with pytest.raises(ParseError) as exc:
            read_cycles_csv(path)
        assert exc.value.line == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            read_cycles_csv(tmp_path / "nope.csv")


class TestLabels:
    def test_round_trip(self, tmp_path):
        path = write_labels_csv(tmp_path / "labels.csv", [("c1", 1, 100.0), ("c1", 2, 99.5)])
        assert read_labels_csv(path) == {("c1", 1): 100.0, ("c1", 2): 99.5}

    def test_round_trip_is_exact(self, tmp_path):
        soh = [101.80185478530375, 99.85000000000001, 0.1 + 0.2, 1e-17, 87.34567890123456]
        rows = [("c1", k + 1, s) for k, s in enumerate(soh)]
        back = read_labels_csv(write_labels_csv(tmp_path / "labels.csv", rows))
        assert [back[("c1", k + 1)] for k in range(len(soh))] == soh

    def test_companion_names(self, tmp_path):
        assert labels_path_for(tmp_path / "x.csv").name == "x_labels.csv"
        assert sidecar_path_for(tmp_path / "x.csv").name == "x.json"


class TestFeatures:
    def test_round_trip_with_labels_and_physics(self, tmp_path, source_dataset):
        partial = [truncate_partial(f, 0.5) for f in source_dataset.features]
        path = write_features(
            tmp_path / "feat.csv", partial, source_dataset.labels, source_dataset.grid,
            source_dataset.physics,
        )
        back = read_features(path)
        assert back.grid == source_dataset.grid
        assert back.physics == source_dataset.physics
        assert back.c_nom == pytest.approx(source_dataset.c_nom)
        assert back.labels == {f.key: source_dataset.labels[f.key] for f in partial}
        for a, b in zip(partial, back.features):
            assert b.n_observed == a.n_observed
            np.testing.assert_array_equal(b.values[b.obs_mask], a.values[a.obs_mask])
            assert np.all(np.isnan(b.values[~b.obs_mask]))

    def test_rejects_gap_in_observed_prefix(self, tmp_path):
        grid = VoltageGrid(v_lower=3.0, v_upper=4.0, n_points=8)
        feature = QdLinearFeature(
            values=np.linspace(0.0, 0.7, 8),
            obs_mask=np.arange(8) < 5,
            current_a=0.5,
            temp_c=25.0,
            cell_id="c1",
            cycle=1,
        )
        path = write_features(tmp_path / "feat.csv", [feature], None, grid)
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        frame.loc[0, "v2"] = ""
        frame.to_csv(path, index=False)
        with pytest.raises(ParseError) as exc:
            read_features(path)
        assert (exc.value.line, exc.value.column) == (2, "t_obs")

    def test_rejects_decreasing_values(self, tmp_path):
        grid = VoltageGrid(v_lower=3.0, v_upper=4.0, n_points=8)
        feature = QdLinearFeature(
            values=np.linspace(0.0, 0.7, 8),
            obs_mask=np.arange(8) < 5,
            current_a=0.5,
            temp_c=25.0,
            cell_id="c1",
            cycle=1,
        )
        path = write_features(tmp_path / "feat.csv", [feature], None, grid)
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        frame.loc[0, "v3"] = "0.05"
        frame.to_csv(path, index=False)
        with pytest.raises(ParseError, match="non-decreasing") as exc:
            read_features(path)
        assert exc.value.line == 2

    def test_missing_sidecar(self, tmp_path):
        path = tmp_path / "orphan.csv"
        path.write_text("cell_id,cycle,current_a,temp_c,t_obs,v0\nc1,1,0.5,25,1,0.1\n")
        with pytest.raises(ParseError):
            read_features(path)


class TestCheckpoint:
    def test_byte_stable(self, tmp_path, tiny_config):
        first = save_checkpoint(tmp_path / "a.json", ModelState.initialize(tiny_config))
        second = save_checkpoint(tmp_path / "b.json", load_checkpoint(first))
        assert first.read_bytes() == second.read_bytes()


class TestExcel:
    def test_sheets_and_widths(self, tmp_path):
        frames = {
            "summary": pd.DataFrame({"method": ["tta_full"], "mae": [0.5]}),
            "samples": pd.DataFrame({"cell_id": ["calce_001"], "predicted_soh": [98.2]}),
        }
        path = save_table_excel(frames, tmp_path / "out" / "report.xlsx")
        workbook = load_workbook(path)
        assert workbook.sheetnames == ["summary", "samples"]
        assert workbook["samples"].column_dimensions["B"].width == len("predicted_soh") + 2
