"""
Result Storage

Local file store for experiment outputs: JSON reports, CSV tables and
plot-ready (x, y) series, written under one output directory per run.
"""

import csv
import io
import json
import logging
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np


def _to_jsonable(value: Any) -> Any:
    """Convert numpy scalars / arrays and complex numbers for json.dump."""
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return [float(np.real(value)), float(np.imag(value))]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def dumps_report(data: Dict[str, Any]) -> str:
    """Deterministic JSON text (sorted keys) for a report."""
    return json.dumps(_to_jsonable(data), indent=2, sort_keys=True)


def csv_text(columns: Sequence[str], rows: Iterable[Sequence[Any]], header: Optional[str] = None) -> str:
    """
    CSV text with an optional leading comment line.

    The comment line (prefixed with '#') is the only place volatile data such as
    timestamps may go; determinism checks skip it.
    """
    buffer = io.StringIO()
    if header:
        buffer.write(f"# {header}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(v) for v in row])
    return buffer.getvalue()


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "" if not np.isfinite(value) else f"{float(value):.10g}"
    return str(value)


class ResultStore:
    """
    Writes experiment outputs under a base directory.

    Methods return True on success and log failures, so callers decide whether
    an IO problem is fatal.
    """

    def __init__(self, base_path: str):
        self.base_path = base_path
        os.makedirs(self.base_path, exist_ok=True)
        logging.info(f"Writing results to: {self.base_path}")

    def path(self, file_name: str) -> str:
        return os.path.join(self.base_path, file_name)

    def write_text(self, file_name: str, content: str) -> bool:
        try:
            file_path = self.path(file_name)
            os.makedirs(os.path.dirname(file_path), exist_ok=True)
            with open(file_path, 'w', newline='') as f:
                f.write(content)
            logging.debug(f"Wrote file: {file_path}")
            return True
        except OSError as e:
            logging.error(f"Error writing {file_name}: {str(e)}")
            return False

    def write_json(self, file_name: str, data: Dict[str, Any]) -> bool:
        return self.write_text(file_name, dumps_report(data) + "\n")

    def write_csv(self, file_name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]],
                  header: Optional[str] = None) -> bool:
        return self.write_text(file_name, csv_text(columns, rows, header))

    def write_series(self, name: str, x: Sequence[float], y: Sequence[float],
                     x_label: str = 'x', y_label: str = 'y') -> bool:
        """Plot-ready two-column CSV under plot_data/."""
        return self.write_csv(os.path.join('plot_data', f'{name}.csv'), [x_label, y_label], zip(x, y))

    def read_json(self, file_name: str) -> Optional[Dict[str, Any]]:
        try:
            with open(self.path(file_name), 'r') as f:
                return json.load(f)
        except FileNotFoundError:
            logging.warning(f"File not found: {file_name}")
            return None
        except (OSError, json.JSONDecodeError) as e:
            logging.error(f"Error reading {file_name}: {str(e)}")
            return None

    def list_files(self, sub_dir: str = '') -> List[str]:
        directory = self.path(sub_dir)
        if not os.path.isdir(directory):
            return []
        return sorted(os.listdir(directory))
