"""
Run registry: maps every experiment id found in a CSV back to the config
copy that produced it, and records the checkpoints each run wrote.
"""

import logging
import sqlite3
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)

REGISTRY_NAME = "registry.db"


class RunRegistry:
    """
    SQLite database under <output_dir>/registry.db.
    """

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.db_path = self.output_dir / REGISTRY_NAME
        self.config_dir = self.output_dir / "configs"
        self._init_database()

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        return conn

    def _init_database(self):
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.config_dir.mkdir(parents=True, exist_ok=True)
        with self._connect() as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS experiments (
                    experiment_id TEXT PRIMARY KEY,
                    command TEXT NOT NULL,
                    config_path TEXT NOT NULL,
                    status TEXT NOT NULL,
                    created_at TEXT NOT NULL,
                    finished_at TEXT
                )
            """)
            conn.execute("""
                CREATE TABLE IF NOT EXISTS artifacts (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    experiment_id TEXT NOT NULL,
                    kind TEXT NOT NULL,
                    path TEXT NOT NULL,
                    created_at TEXT NOT NULL
                )
            """)
            conn.execute("""
                CREATE INDEX IF NOT EXISTS idx_artifacts_experiment
                ON artifacts(experiment_id)
            """)
        logger.debug(f"Run registry ready: {self.db_path}")

    @staticmethod
    def _now() -> str:
        return datetime.now(timezone.utc).isoformat()

    def start(self, experiment_id: str, command: str, config_yaml: str) -> Path:
        """Store the config copy and mark the experiment as running."""
        config_path = self.config_dir / f"{experiment_id}.yaml"
        config_path.write_text(config_yaml, encoding="utf-8")
        with self._connect() as conn:
            conn.execute("""
                INSERT INTO experiments (experiment_id, command, config_path, status, created_at)
                VALUES (?, ?, ?, 'running', ?)
                ON CONFLICT(experiment_id) DO UPDATE SET status = 'running', finished_at = NULL
            """, (experiment_id, command, str(config_path), self._now()))
        return config_path

    def finish(self, experiment_id: str, status: str = "completed"):
        with self._connect() as conn:
            conn.execute("UPDATE experiments SET status = ?, finished_at = ? WHERE experiment_id = ?",
                         (status, self._now(), experiment_id))

    def record_artifact(self, experiment_id: str, kind: str, path: Path):
        with self._connect() as conn:
            conn.execute("INSERT INTO artifacts (experiment_id, kind, path, created_at) VALUES (?, ?, ?, ?)",
                         (experiment_id, kind, str(path), self._now()))

    def get(self, experiment_id: str) -> Optional[Dict[str, Any]]:
        with self._connect() as conn:
            row = conn.execute("SELECT * FROM experiments WHERE experiment_id = ?",
                               (experiment_id,)).fetchone()
        return dict(row) if row else None

    def config_path(self, experiment_id: str) -> Optional[Path]:
        entry = self.get(experiment_id)
        return Path(entry["config_path"]) if entry else None

    def artifacts(self, experiment_id: str) -> List[Dict[str, Any]]:
        with self._connect() as conn:
            rows = conn.execute("SELECT kind, path, created_at FROM artifacts WHERE experiment_id = ? "
                                "ORDER BY id", (experiment_id,)).fetchall()
        return [dict(row) for row in rows]

    def list_experiments(self) -> List[Dict[str, Any]]:
        with self._connect() as conn:
            rows = conn.execute("SELECT * FROM experiments ORDER BY created_at").fetchall()
        return [dict(row) for row in rows]
