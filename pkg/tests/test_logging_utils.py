import pandas as pd

from batteryttt.schemas.training import AdaptationReport, SampleRecord
from batteryttt.utils.logging_utils import RUN_LOG_COLUMNS, clear_logs, get_log_summary, log_run


def _report(mode: str, mae: float) -> AdaptationReport:
    return AdaptationReport(
        config={"mode": mode, "ssl": "pg_ssl", "mask_ratio": 0.8},
        samples=[SampleRecord(cell_id="c1", cycle=1, predicted_soh=99.0, true_soh=99.0 + mae)],
        mae=mae,
        rmse=mae,
        trainable_params=32,
        total_ms=5.0,
    )


class TestRunLog:
    def test_append_and_summarize(self, tmp_path):
        path = tmp_path / "logs" / "runs.csv"
        log_run("adapt", _report("tta_full", 1.0), seed=0, log_path=path)
        log_run("adapt", _report("tta_full", 3.0), seed=1, log_path=path)
        log_run("ablate", _report("none", 4.0), log_path=path)

        frame = pd.read_csv(path)
        assert list(frame.columns) == RUN_LOG_COLUMNS
        assert len(frame) == 3

        summary = get_log_summary(path)
        assert summary["total_runs"] == 3
        assert summary["commands"] == {"adapt": 2, "ablate": 1}
        assert summary["mean_metrics"]["tta_full/pg_ssl"]["mae"] == 2.0
        assert summary["mean_latency_ms"] == 5.0

    def test_missing_log(self, tmp_path):
        assert get_log_summary(tmp_path / "none.csv")["total_runs"] == 0

    def test_clear(self, tmp_path):
        path = tmp_path / "runs.csv"
        log_run("adapt", _report("tta_ppa", 1.0), log_path=path)
        clear_logs(path)
        assert not path.exists()

    def test_disabled_by_config(self, tmp_path, monkeypatch):
        config = tmp_path / "config.yaml"
        config.write_text("logging:\n  enabled: false\n")
        monkeypatch.setenv("BATTERYTTT_CONFIG", str(config))
        assert log_run("adapt", _report("none", 1.0)) is None
