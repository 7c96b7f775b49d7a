"""Query-engine adapter: catalog introspection, timed execution, result capture.

The desk-scale implementation embeds sqlite3 in-process and registers suite
tables from CSV files with sidecar schemas.  Cluster engines would sit behind
the same adapter surface; only the embedded engine ships here.
"""

from __future__ import annotations

import csv
import sqlite3
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .resultset import ResultTable

DEFAULT_ROW_CAP = 1_000_000

_SQLITE_TYPES = {
    "integer": "INTEGER",
    "float": "REAL",
    "text": "TEXT",
    "bool": "INTEGER",
    "date": "TEXT",
}

_TRUE_LITERALS = {"1", "true", "t", "yes"}
_FALSE_LITERALS = {"0", "false", "f", "no"}


class EngineError(RuntimeError):
    """SQL execution failed; the message carries the engine diagnostic."""


class TableNotFoundError(EngineError):
    """A catalog operation referenced a table that does not exist."""


class RegistrationError(EngineError):
    """A data file could not be loaded into the session catalog."""


class ResultOverflowError(EngineError):
    """A query produced more rows than the materialization cap allows."""


class SessionClosedError(EngineError):
    """Operation attempted on a closed session."""


@dataclass(frozen=True)
class EngineConfig:
    """Where the engine finds its data and how much it may materialize."""

    kind: str = "embedded"
    data_dir: str | Path | None = None
    database: str = "main"
    row_cap: int = DEFAULT_ROW_CAP
    connection_string: str | None = None


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    type_tag: str


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[ColumnSchema, ...] = field(default_factory=tuple)


class EngineAdapter:
    """Interface every engine implementation provides to the agent tools."""

    database: str = "main"

    def list_tables(self) -> list[str]:
        raise NotImplementedError

    def get_create_table(self, table: str) -> str:
        raise NotImplementedError

    def execute_timed(self, sql: str) -> tuple[ResultTable, float, int | None]:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class EmbeddedEngine(EngineAdapter):
    """In-process sqlite-backed session over a CSV + sidecar-schema data dir."""

    def __init__(self, config: EngineConfig):
        self.config = config
        self.database = config.database
        self._conn: sqlite3.Connection | None = sqlite3.connect(
            ":memory:", check_same_thread=False
        )
        if config.data_dir is not None:
            self._register_data_dir(Path(config.data_dir))

    def __enter__(self) -> "EmbeddedEngine":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    @property
    def conn(self) -> sqlite3.Connection:
        if self._conn is None:
            raise SessionClosedError("engine session is closed")
        return self._conn

    def _register_data_dir(self, data_dir: Path) -> None:
        if not data_dir.is_dir():
            raise RegistrationError(f"data directory not found: {data_dir}")
        for schema_path in sorted(data_dir.glob("*.schema")):
            table = schema_path.stem
            csv_path = data_dir / f"{table}.csv"
            if not csv_path.exists():
                raise RegistrationError(f"missing data file: {csv_path}")
            schema = read_schema_file(schema_path)
            try:
                self._create_and_load(schema, csv_path)
            except (sqlite3.Error, ValueError) as exc:
                raise RegistrationError(
                    f"failed to register {csv_path}: {exc}"
                ) from exc

    def _create_and_load(self, schema: TableSchema, csv_path: Path) -> None:
        columns_sql = ", ".join(
            f'"{c.name}" {_SQLITE_TYPES[c.type_tag]}' for c in schema.columns
        )
        self.conn.execute(f'CREATE TABLE "{schema.name}" ({columns_sql})')
        converters = [_converter(c.type_tag) for c in schema.columns]
        placeholders = ", ".join("?" for _ in schema.columns)
        insert_sql = f'INSERT INTO "{schema.name}" VALUES ({placeholders})'
        with open(csv_path, newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None:
                return
            expected = [c.name for c in schema.columns]
            if [h.strip().lower() for h in header] != expected:
                raise RegistrationError(
                    f"{csv_path}: header {header} does not match schema {expected}"
                )
            batch = []
            for row in reader:
                if len(row) != len(converters):
                    raise RegistrationError(
                        f"{csv_path}: row width {len(row)} != {len(converters)}"
                    )
                batch.append(tuple(conv(cell) for conv, cell in zip(converters, row)))
                if len(batch) >= 10_000:
                    self.conn.executemany(insert_sql, batch)
                    batch.clear()
            if batch:
                self.conn.executemany(insert_sql, batch)
        self.conn.commit()

    def list_tables(self) -> list[str]:
        cursor = self.conn.execute(
            "SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY name"
        )
        return [row[0] for row in cursor.fetchall()]

    def get_create_table(self, table: str) -> str:
        cursor = self.conn.execute(
            "SELECT sql FROM sqlite_master WHERE type = 'table' AND name = ?",
            (table,),
        )
        row = cursor.fetchone()
        if row is None or row[0] is None:
            raise TableNotFoundError(f"table not found: {table}")
        return row[0]

    def execute_timed(self, sql: str) -> tuple[ResultTable, float, int | None]:
        """Run one statement, returning the full result and wall-clock seconds.

        Results above the row cap abort with an overflow error; metric
        comparison needs complete materialization, so truncation would be
        silently wrong.
        """
        conn = self.conn
        started = time.perf_counter()
        try:
            cursor = conn.execute(sql)
            rows: list[tuple[Any, ...]] = []
            while True:
                chunk = cursor.fetchmany(10_000)
                if not chunk:
                    break
                rows.extend(chunk)
                if len(rows) > self.config.row_cap:
                    raise ResultOverflowError(
                        f"result exceeded the {self.config.row_cap}-row cap"
                    )
        except sqlite3.Error as exc:
            raise EngineError(f"sql execution failed: {exc}") from exc
        elapsed = time.perf_counter() - started
        if cursor.description is None:
            return ResultTable.build([]), elapsed, None
        names = [d[0] for d in cursor.description]
        return ResultTable.from_query_result(names, rows), elapsed, None

    def explain(self, sql: str) -> None:
        """Compile without executing; raises EngineError on invalid SQL."""
        try:
            self.conn.execute(f"EXPLAIN {sql}").fetchall()
        except sqlite3.Error as exc:
            raise EngineError(f"sql does not compile: {exc}") from exc


def read_schema_file(path: str | Path) -> TableSchema:
    """Parse a sidecar schema: one 'column_name type_tag' pair per line."""
    path = Path(path)
    columns = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise RegistrationError(f"{path}:{lineno}: expected 'name type'")
        name, tag = parts[0].lower(), parts[1].lower()
        if tag not in _SQLITE_TYPES:
            raise RegistrationError(f"{path}:{lineno}: unknown type {tag!r}")
        columns.append(ColumnSchema(name, tag))
    return TableSchema(path.stem, tuple(columns))


def write_schema_file(path: str | Path, schema: TableSchema) -> None:
    lines = [f"{c.name} {c.type_tag}" for c in schema.columns]
    Path(path).write_text("\n".join(lines) + "\n")


def _converter(type_tag: str):
    if type_tag == "integer":
        return lambda cell: int(cell) if cell != "" else None
    if type_tag == "float":
        return lambda cell: float(cell) if cell != "" else None
    if type_tag == "bool":
        return _parse_bool
    return lambda cell: cell if cell != "" else None


def _parse_bool(cell: str) -> int | None:
    if cell == "":
        return None
    lowered = cell.strip().lower()
    if lowered in _TRUE_LITERALS:
        return 1
    if lowered in _FALSE_LITERALS:
        return 0
    raise ValueError(f"not a boolean literal: {cell!r}")


def open_session(config: EngineConfig) -> EngineAdapter:
    """Open an engine session with all suite tables registered."""
    if config.kind == "embedded":
        return EmbeddedEngine(config)
    if config.kind == "external":
        raise EngineError(
            "external engines are reachable only through a connection plugin; "
            "this build ships the embedded engine"
        )
    raise EngineError(f"unknown engine kind: {config.kind!r}")
