import csv
import hashlib
import json
import logging
import os
from typing import Any, Dict, Iterable, Sequence

import numpy as np

_LOG_FORMAT = '[%(asctime)s] [%(levelname)s] %(message)s'
_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def _build_logger() -> logging.Logger:
    logger = logging.getLogger('kawactl')
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_LOG_FORMAT, datefmt=_DATE_FORMAT))
        logger.addHandler(handler)
        logger.setLevel(logging.INFO)
    return logger


class Logger:
    _logger = _build_logger()

    @staticmethod
    def log(level: str, message: str):
        Logger._logger.log(logging.getLevelName(level), message)

    @staticmethod
    def info(message: str):
        Logger.log('INFO', message)

    @staticmethod
    def error(message: str):
        Logger.log('ERROR', message)

    @staticmethod
    def warning(message: str):
        Logger.log('WARNING', message)

    @staticmethod
    def debug(message: str):
        Logger.log('DEBUG', message)

    @staticmethod
    def set_level(level: str):
        Logger._logger.setLevel(logging.getLevelName(level))


def format_float(value: float) -> str:
    # 17 significant digits round-trip every double
    return format(float(value), '.17g')


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) for v in row])
    return path


def read_csv_column(path: str, column: int = -1) -> np.ndarray:
    """Read one numeric column of a CSV file with a header row."""
    with open(path, 'r', encoding='utf-8') as f:
        reader = csv.reader(f)
        next(reader, None)
        values = [float(row[column]) for row in reader if row]
    return np.asarray(values, dtype=float)


def write_json(path: str, payload: Dict[str, Any]) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def calculate_file_hash(file_path: str) -> str:
    sha256 = hashlib.sha256()
    with open(file_path, 'rb') as f:
        for chunk in iter(lambda: f.read(4096), b''):
            sha256.update(chunk)
    return sha256.hexdigest()


def format_file_size(size_bytes: float) -> str:
    for unit in ['B', 'KB', 'MB', 'GB']:
        if size_bytes < 1024.0:
            return f"{size_bytes:.2f} {unit}"
        size_bytes /= 1024.0
    return f"{size_bytes:.2f} TB"
