import json
import os
from typing import Any, Dict, List

import pandas as pd

from utils.schemas import ESTIMATE_COLUMNS, EstimateResult

FLOAT_FORMAT = "%.12g"
PLOT_COLUMNS = ["x", "y", "series"]


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_jsonl(path: str, lines) -> None:
    with open(path, "w") as f:
        for line in lines:
            f.write(line)
            f.write("\n")


def write_json(path: str, payload: Any) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def write_frame(path: str, frame: pd.DataFrame) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def estimates_frame(results: List[EstimateResult]) -> pd.DataFrame:
    return pd.DataFrame([r.csv_row() for r in results], columns=ESTIMATE_COLUMNS)


def plot_frame(results: List[EstimateResult]) -> pd.DataFrame:
    """x = n, y = log_rate, one series per policy."""
    rows: List[Dict[str, Any]] = [
        {"x": r.n, "y": r.log_rate_text, "series": r.policy} for r in results
    ]
    return pd.DataFrame(rows, columns=PLOT_COLUMNS)
