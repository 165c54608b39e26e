"""
File processing utilities: cycle, label and feature CSVs, checkpoints and
report exports.
"""

import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from openpyxl.utils import get_column_letter

from ..exceptions import ParseError
from ..schemas.ecm import CycleRecord
from ..schemas.features import FeatureDataset, PhysicsSidecar, QdLinearFeature, VoltageGrid
from .json_utils import parse_with_pydantic, read_json, write_json

if TYPE_CHECKING:
    from ..core.model import ModelState

logger = logging.getLogger(__name__)

CYCLE_COLUMNS = ["cell_id", "cycle", "idx", "t_s", "voltage_v", "current_a", "temp_c", "q_ah"]
LABEL_COLUMNS = ["cell_id", "cycle", "soh_pct"]
FEATURE_META_COLUMNS = ["cell_id", "cycle", "current_a", "temp_c", "t_obs"]


def get_project_root() -> Path:
    """
    Get the project root directory.

    Returns:
        Path to project root
    """
    # Assuming this file is in src/batteryttt/utils/
    return Path(__file__).parent.parent.parent.parent


def ensure_output_directory(path: str | Path) -> Path:
    """
    Ensure the parent directory of ``path`` exists.

    Returns:
        ``path`` as a Path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def labels_path_for(path: str | Path) -> Path:
    """Companion label file: ``cycles.csv`` -> ``cycles_labels.csv``."""
    path = Path(path)
    return path.with_name(f"{path.stem}_labels.csv")


def sidecar_path_for(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


# --------------------------------------------------------------------------
# CSV parsing helpers
# --------------------------------------------------------------------------


def _read_text_table(path: Path) -> Optional[pd.DataFrame]:
    if not path.exists():
        raise ParseError("file not found", path=str(path))
    if path.stat().st_size == 0:
        return None
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        return None
    except pd.errors.ParserError as e:
        raise ParseError(f"malformed CSV: {e}", path=str(path)) from e


def _require_columns(df: pd.DataFrame, columns: Sequence[str], path: Path) -> None:
    for column in columns:
        if column not in df.columns:
            raise ParseError("missing column", path=str(path), line=1, column=column)


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        return np.nan


# float() is correctly rounded, so written reprs read back bit-identical
_parse_floats = np.frompyfunc(_parse_float, 1, 1)


def _to_float64(raw: pd.Series | pd.DataFrame) -> np.ndarray:
    return _parse_floats(raw.to_numpy(dtype=object)).astype(np.float64)


def _numeric_column(df: pd.DataFrame, column: str, path: Path, integral: bool = False) -> np.ndarray:
    raw = df[column]
    arr = _to_float64(raw)
    bad = ~np.isfinite(arr)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        cell = raw.iloc[i]
        reason = "missing value" if pd.isna(cell) or str(cell).strip() == "" else f"non-numeric value '{cell}'"
        raise ParseError(reason, path=str(path), line=i + 2, column=column)
    if integral:
        frac = np.flatnonzero(arr != np.round(arr))
        if frac.size:
            raise ParseError("expected an integer", path=str(path), line=int(frac[0]) + 2, column=column)
        return arr.astype(np.int64)
    return arr


def _identifier_column(df: pd.DataFrame, column: str, path: Path) -> np.ndarray:
    raw = df[column].fillna("").astype(str).str.strip()
    empty = np.flatnonzero((raw == "").to_numpy())
    if empty.size:
        raise ParseError("missing value", path=str(path), line=int(empty[0]) + 2, column=column)
    return raw.to_numpy()


# --------------------------------------------------------------------------
# Cycles and labels
# --------------------------------------------------------------------------


def write_cycles_csv(path: str | Path, records: Sequence[CycleRecord]) -> Path:
    """Write cycles as ``cell_id,cycle,idx,t_s,voltage_v,current_a,temp_c,q_ah``."""
    path = ensure_output_directory(path)
    if not records:
        pd.DataFrame(columns=CYCLE_COLUMNS).to_csv(path, index=False)
        return path
    frame = pd.DataFrame(
        {
            "cell_id": np.concatenate([np.full(len(r), r.cell_id, dtype=object) for r in records]),
            "cycle": np.concatenate([np.full(len(r), r.cycle, dtype=np.int64) for r in records]),
            "idx": np.concatenate([np.arange(len(r), dtype=np.int64) for r in records]),
            "t_s": np.concatenate([r.t_s for r in records]),
            "voltage_v": np.concatenate([r.voltage_v for r in records]),
            "current_a": np.concatenate([r.current_a for r in records]),
            "temp_c": np.concatenate([r.temp_c for r in records]),
            "q_ah": np.concatenate([r.q_ah for r in records]),
        }
    )
    frame.to_csv(path, index=False, encoding="utf-8")
    logger.info(f"Saved {len(records)} cycles ({len(frame)} samples) to {path}")
    return path


def read_cycles_csv(path: str | Path) -> list[CycleRecord]:
    """
    Read a cycle CSV into records, in order of first appearance.

    Raises:
        ParseError: Missing columns, non-numeric fields or non-increasing time,
            with the offending line and column
    """
    path = Path(path)
    df = _read_text_table(path)
    if df is None:
        return []
    _require_columns(df, CYCLE_COLUMNS, path)
    if df.empty:
        return []

    cell_ids = _identifier_column(df, "cell_id", path)
    cycles = _numeric_column(df, "cycle", path, integral=True)
    columns = {c: _numeric_column(df, c, path) for c in ("t_s", "voltage_v", "current_a", "temp_c", "q_ah")}

    codes = (
        pd.DataFrame({"cell_id": cell_ids, "cycle": cycles})
        .groupby(["cell_id", "cycle"], sort=False)
        .ngroup()
        .to_numpy()
    )
    order = np.argsort(codes, kind="stable")
    bounds = np.cumsum(np.bincount(codes))[:-1]

    records = []
    for rows in np.split(order, bounds):
        t = columns["t_s"][rows]
        back = np.flatnonzero(np.diff(t) <= 0)
        if back.size:
            raise ParseError(
                "non-monotone time", path=str(path), line=int(rows[back[0] + 1]) + 2, column="t_s"
            )
        records.append(
            CycleRecord(
                cell_id=str(cell_ids[rows[0]]),
                cycle=int(cycles[rows[0]]),
                t_s=t,
                voltage_v=columns["voltage_v"][rows],
                current_a=columns["current_a"][rows],
                temp_c=columns["temp_c"][rows],
                q_ah=columns["q_ah"][rows],
            )
        )
    logger.info(f"Read {len(records)} cycles from {path}")
    return records


def write_labels_csv(path: str | Path, rows: Iterable[tuple[str, int, float]]) -> Path:
    path = ensure_output_directory(path)
    frame = pd.DataFrame(list(rows), columns=LABEL_COLUMNS)
    frame.to_csv(path, index=False, encoding="utf-8")
    return path


def read_labels_csv(path: str | Path) -> dict[tuple[str, int], float]:
    path = Path(path)
    df = _read_text_table(path)
    if df is None:
        return {}
    _require_columns(df, LABEL_COLUMNS, path)
    if df.empty:
        return {}
    cell_ids = _identifier_column(df, "cell_id", path)
    cycles = _numeric_column(df, "cycle", path, integral=True)
    soh = _numeric_column(df, "soh_pct", path)
    return {(str(c), int(k)): float(s) for c, k, s in zip(cell_ids, cycles, soh)}


# --------------------------------------------------------------------------
# Features
# --------------------------------------------------------------------------


def write_features(
    path: str | Path,
    features: Sequence[QdLinearFeature],
    labels: Optional[dict[tuple[str, int], float]],
    grid: VoltageGrid,
    physics: Optional[PhysicsSidecar] = None,
) -> Path:
    """
    Write features (observed values only), the JSON sidecar and, when given,
    the companion label file.
    """
    path = ensure_output_directory(path)
    n_points = grid.n_points
    value_columns = [f"v{j}" for j in range(n_points)]
    if features:
        values = np.stack([np.where(f.obs_mask, f.values, np.nan) for f in features])
    else:
        values = np.empty((0, n_points))
    frame = pd.DataFrame(values, columns=value_columns)
    frame.insert(0, "t_obs", [f.n_observed for f in features])
    frame.insert(0, "temp_c", [f.temp_c for f in features])
    frame.insert(0, "current_a", [f.current_a for f in features])
    frame.insert(0, "cycle", [f.cycle for f in features])
    frame.insert(0, "cell_id", [f.cell_id for f in features])
    frame.to_csv(path, index=False, na_rep="", encoding="utf-8")

    c_nom = features[0].c_nom if features else 1.0
    write_json(
        sidecar_path_for(path),
        {
            **grid.model_dump(mode="json"),
            "c_nom": c_nom,
            "physics": physics.model_dump(mode="json") if physics else None,
        },
    )
    if labels is not None:
        write_labels_csv(
            labels_path_for(path),
            [(f.cell_id, f.cycle, labels[f.key]) for f in features if f.key in labels],
        )
    logger.info(f"Saved {len(features)} features to {path}")
    return path


def read_features(path: str | Path) -> FeatureDataset:
    """
    Read a feature CSV with its sidecar (grid, nominal capacity, physics) and
    optional label file.

    Raises:
        ParseError: Malformed rows or a non-prefix observed region
    """
    path = Path(path)
    sidecar_file = sidecar_path_for(path)
    grid, physics, c_nom = None, None, 1.0
    if sidecar_file.exists():
        sidecar = read_json(sidecar_file)
        grid = parse_with_pydantic(
            {k: sidecar.get(k) for k in ("v_lower", "v_upper", "n_points")},
            VoltageGrid,
            source=str(sidecar_file),
        )
        c_nom = float(sidecar.get("c_nom", 1.0))
        if sidecar.get("physics"):
            physics = parse_with_pydantic(sidecar["physics"], PhysicsSidecar, source=str(sidecar_file))

    label_file = labels_path_for(path)
    labels = read_labels_csv(label_file) if label_file.exists() else {}

    df = _read_text_table(path)
    if df is None:
        return FeatureDataset(features=[], grid=grid, labels=labels, physics=physics, c_nom=c_nom)
    if grid is None:
        raise ParseError("feature sidecar not found", path=str(sidecar_file))
    value_columns = [f"v{j}" for j in range(grid.n_points)]
    _require_columns(df, FEATURE_META_COLUMNS + value_columns, path)

    cell_ids = _identifier_column(df, "cell_id", path)
    cycles = _numeric_column(df, "cycle", path, integral=True)
    currents = _numeric_column(df, "current_a", path)
    temps = _numeric_column(df, "temp_c", path)
    t_obs = _numeric_column(df, "t_obs", path, integral=True)

    raw = df[value_columns].apply(lambda col: col.str.strip())
    present = (raw != "").to_numpy()
    values = _to_float64(raw)
    bad = present & ~np.isfinite(values)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ParseError("non-numeric value", path=str(path), line=int(i) + 2, column=value_columns[j])

    features = []
    for i in range(len(df)):
        n = int(t_obs[i])
        prefix = np.arange(grid.n_points) < n
        if not np.array_equal(present[i], prefix):
            raise ParseError(
                f"observed values must fill exactly the first t_obs={n} columns",
                path=str(path),
                line=i + 2,
                column="t_obs",
            )
        try:
            feature = QdLinearFeature(
                values=np.where(prefix, values[i], np.nan),
                obs_mask=prefix,
                current_a=float(currents[i]),
                temp_c=float(temps[i]),
                cell_id=str(cell_ids[i]),
                cycle=int(cycles[i]),
                c_nom=c_nom,
            )
        except ValueError as e:
            raise ParseError(str(e), path=str(path), line=i + 2) from e
        features.append(feature)
    logger.info(f"Read {len(features)} features from {path}")
    return FeatureDataset(features=features, grid=grid, labels=labels, physics=physics, c_nom=c_nom)


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------


def save_checkpoint(path: str | Path, state: "ModelState") -> Path:
    """Byte-stable JSON checkpoint (sorted keys, round-trip float repr)."""
    path = ensure_output_directory(path)
    path.write_text(json.dumps(state.to_checkpoint(), sort_keys=True, separators=(",", ":")))
    logger.info(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: str | Path) -> "ModelState":
    from ..core.model import ModelState

    return ModelState.from_checkpoint(read_json(path))


# --------------------------------------------------------------------------
# Tabular exports
# --------------------------------------------------------------------------


def save_table_excel(frames: dict[str, pd.DataFrame], path: str | Path) -> Path:
    """
    Save one sheet per DataFrame with auto-adjusted column widths.

    Returns:
        Path to the saved workbook
    """
    path = ensure_output_directory(path)
    with pd.ExcelWriter(path, engine="openpyxl") as writer:
        for sheet, df in frames.items():
            df.to_excel(writer, index=False, sheet_name=sheet)
            worksheet = writer.sheets[sheet]
            for idx, col in enumerate(df.columns, start=1):
                longest = df[col].astype(str).map(len).max() if len(df) else 0
                # Cap at 40 characters for readability
                worksheet.column_dimensions[get_column_letter(idx)].width = min(
                    max(longest, len(str(col))) + 2, 40
                )
    logger.info(f"Saved workbook to {path}")
    return path
