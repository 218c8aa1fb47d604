import sqlite3
import json
from typing import Dict, List, Optional
from datetime import datetime
import os

from utils import Logger

DEFAULT_CALIBRATION_PATH = "kawactl_calibration.db"


class DatabaseManager:
    """Run registry and calibration store on a single sqlite file."""

    def __init__(self, db_path: str = DEFAULT_CALIBRATION_PATH):
        self.db_path = db_path
        directory = os.path.dirname(db_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        self._init_database()

    @classmethod
    def from_env(cls, default: str = DEFAULT_CALIBRATION_PATH) -> 'DatabaseManager':
        return cls(os.environ.get('KAWACTL_CALIBRATION', default))

    def _init_database(self):

        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                run_id TEXT PRIMARY KEY,
                mode TEXT NOT NULL,
                scenario TEXT NOT NULL,
                out_dir TEXT NOT NULL,
                started TEXT NOT NULL,
                finished TEXT,
                status TEXT DEFAULT 'running',
                exit_code INTEGER,
                error TEXT
            )
        ''')

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS calibration (
                L REAL NOT NULL,
                N INTEGER NOT NULL,
                M INTEGER NOT NULL,
                theta REAL NOT NULL,
                constant REAL NOT NULL,
                ratios TEXT,
                recorded_date TEXT NOT NULL,
                PRIMARY KEY (L, N, M, theta)
            )
        ''')

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS metrics (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id TEXT,
                metric_name TEXT NOT NULL,
                metric_value REAL NOT NULL,
                recorded_date TEXT NOT NULL
            )
        ''')

        conn.commit()
        conn.close()

        Logger.debug(f"database ready at {self.db_path}")

    def create_run(self, run_id: str, mode: str, scenario: Dict, out_dir: str):

        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        cursor.execute('''
            INSERT OR REPLACE INTO runs (run_id, mode, scenario, out_dir, started, status)
            VALUES (?, ?, ?, ?, ?, ?)
        ''', (run_id, mode, json.dumps(scenario, sort_keys=True), out_dir,
              datetime.now().isoformat(), 'running'))

        conn.commit()
        conn.close()

    def update_status(
        self,
        run_id: str,
        status: str,
        exit_code: int,
        error: Optional[str] = None
    ):

        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        cursor.execute('''
            UPDATE runs
            SET status = ?, exit_code = ?, finished = ?, error = ?
            WHERE run_id = ?
        ''', (status, exit_code, datetime.now().isoformat(), error, run_id))

        conn.commit()
        conn.close()

    def get_run(self, run_id: str) -> Optional[Dict]:

        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        cursor = conn.cursor()

        cursor.execute('SELECT * FROM runs WHERE run_id = ?', (run_id,))
        row = cursor.fetchone()
        conn.close()

        if not row:
            return None

        result = dict(row)
        result['scenario'] = json.loads(result['scenario'])
        result['metrics'] = {
            m['metric_name']: m['metric_value'] for m in self.get_run_metrics(run_id)
        }
        return result

    def save_calibration(self, L: float, N: int, M: int, theta: float, constant: float,
                         ratios: Optional[Dict] = None):

        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        cursor.execute('''
            INSERT OR REPLACE INTO calibration
            (L, N, M, theta, constant, ratios, recorded_date)
            VALUES (?, ?, ?, ?, ?, ?, ?)
        ''', (L, N, M, theta, constant, json.dumps(ratios or {}, sort_keys=True),
              datetime.now().isoformat()))

        conn.commit()
        conn.close()

    def get_calibration(self, L: float, N: int, M: int, theta: float) -> Optional[float]:

        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        cursor.execute('''
            SELECT constant FROM calibration
            WHERE L = ? AND N = ? AND M = ? AND theta = ?
        ''', (L, N, M, theta))

        row = cursor.fetchone()
        conn.close()

        return float(row[0]) if row else None

    def log_metric(self, metric_name: str, metric_value: float, run_id: Optional[str] = None):

        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        cursor.execute('''
            INSERT INTO metrics (run_id, metric_name, metric_value, recorded_date)
            VALUES (?, ?, ?, ?)
        ''', (run_id, metric_name, float(metric_value), datetime.now().isoformat()))

        conn.commit()
        conn.close()

    def get_run_metrics(self, run_id: str) -> List[Dict]:

        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        cursor = conn.cursor()

        cursor.execute('''
            SELECT metric_name, metric_value FROM metrics
            WHERE run_id = ?
            ORDER BY id
        ''', (run_id,))

        rows = cursor.fetchall()
        conn.close()

        return [dict(row) for row in rows]
