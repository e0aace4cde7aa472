"""
Result storage using CSV and JSON files in the data directory.
"""

import csv
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np

from evaluation import CurvePoint, GridTable

logger = logging.getLogger(__name__)

TOOLKIT_NAME = 'dpc-toolkit'
TOOLKIT_VERSION = '1.0.0'

CURVE_COLUMNS = ('scheme', 'lambda', 'snr_db', 'ser', 'ci95', 'n_samples', 'interference', 'seed', 'analytic')


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ''
    if isinstance(value, float) and math.isnan(value):
        return 'nan'
    return repr(float(value))


def curve_row(point: CurvePoint) -> List[str]:
    return [point.scheme, _fmt(point.lam), _fmt(point.snr_db), _fmt(point.ser.ser),
            _fmt(point.ser.ci95_halfwidth), str(point.ser.n_samples), point.interference,
            str(point.seed), '1' if point.analytic else '0']


class ResultStore:
    """Manages run artifacts: curve CSVs, training logs, grid exports and the run summary."""

    def __init__(self, data_dir: Union[str, Path] = 'data'):
        """Initialize result store."""
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)

        self.summary_file = self.data_dir / 'last_run_summary.json'

        logger.info(f"Result store initialized at {self.data_dir}")

    def resolve(self, path: Union[str, Path]) -> Path:
        """Relative paths land inside the data directory."""
        path = Path(path)
        return path if path.is_absolute() else self.data_dir / path

    @staticmethod
    def header_line(config_echo: str) -> str:
        return f"# {TOOLKIT_NAME} {TOOLKIT_VERSION} {config_echo}"

    def _write_table(self, path: Path, columns: Iterable[str], rows: Iterable[Iterable[Any]],
                     config_echo: str, append: bool = False) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not append or not path.exists() or path.stat().st_size == 0
        with open(path, 'w' if fresh else 'a', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            if fresh:
                f.write(self.header_line(config_echo) + '\n')
                writer.writerow(columns)
            writer.writerows(rows)
        return path

    def write_curve(self, path: Union[str, Path], points: List[CurvePoint], config_echo: str,
                    append: bool = False) -> Path:
        """Write (or append) curve rows."""
        path = self._write_table(self.resolve(path), CURVE_COLUMNS, (curve_row(p) for p in points),
                                 config_echo, append)
        logger.info(f"Wrote {len(points)} curve row(s) to {path}")
        return path

    def write_training_log(self, path: Union[str, Path], loss_history: List[float], config_echo: str) -> Path:
        rows = ([str(epoch), _fmt(loss)] for epoch, loss in enumerate(loss_history, start=1))
        path = self._write_table(self.resolve(path), ('epoch', 'loss'), rows, config_echo)
        logger.info(f"Wrote training log ({len(loss_history)} epochs) to {path}")
        return path

    def write_grid(self, path: Union[str, Path], table: GridTable, config_echo: str) -> Path:
        integer_label = table.columns[-1] == 'label'
        rows = []
        for row in np.asarray(table.rows):
            cells = [_fmt(value) for value in row]
            if integer_label:
                cells[-1] = str(int(row[-1]))
            rows.append(cells)
        path = self._write_table(self.resolve(path), table.columns, rows, config_echo)
        logger.info(f"Wrote {len(rows)} grid rows to {path}")
        return path

    def read_curve(self, path: Union[str, Path]) -> List[Dict[str, str]]:
        """Curve rows as dicts, skipping the comment header."""
        path = self.resolve(path)
        with open(path, 'r', encoding='utf-8', newline='') as f:
            lines = [line for line in f if not line.startswith('#')]
        return list(csv.DictReader(lines))

    def save_run_summary(self, summary: Dict[str, Any]) -> Path:
        """Save the record of the last CLI run."""
        record = {'timestamp': datetime.now(timezone.utc).isoformat(), **summary}
        try:
            with open(self.summary_file, 'w', encoding='utf-8') as f:
                json.dump(record, f, indent=2, ensure_ascii=False)
        except OSError as e:
            logger.error(f"Error saving run summary: {e}")
        return self.summary_file

    def load_run_summary(self) -> Optional[Dict[str, Any]]:
        if not self.summary_file.exists():
            return None
        try:
            with open(self.summary_file, 'r', encoding='utf-8') as f:
                return json.load(f)
        except (OSError, ValueError) as e:
            logger.error(f"Error loading run summary: {e}")
            return None

    def get_statistics(self) -> Dict[str, Any]:
        """Get statistics about stored artifacts."""
        return {
            'csv_files': sum(1 for _ in self.data_dir.rglob('*.csv')),
            'checkpoints': sum(1 for _ in self.data_dir.rglob('*.ndpc')),
            'data_directory': str(self.data_dir.absolute())
        }
