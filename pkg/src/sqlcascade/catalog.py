"""Database bundle ingestion and schema-text serialization.

A bundle follows the BIRD layout: ``<root>/<db_id>/<db_id>.sqlite`` plus an
optional ``database_description/`` directory of per-table CSV files. The
loaded catalog is immutable after load and safe to share across workers.
"""

from __future__ import annotations

import csv
import logging
import sqlite3
import urllib.parse
from dataclasses import dataclass, field
from pathlib import Path

from .config import IngestionConfig
from .errors import (
    DatabaseUnreadable,
    DuplicateTableName,
    MalformedDescriptionFile,
    MissingDatabaseFile,
    UnknownColumn,
)

logger = logging.getLogger(__name__)

_TEXT_AFFINITY_MARKERS = ("CHAR", "CLOB", "TEXT")
_DESCRIPTION_ENCODINGS = ("utf-8-sig", "cp1252")


def _quote_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def read_only_uri(db_file: Path | str) -> str:
    """SQLite URI that opens the database read-only."""
    return "file:" + urllib.parse.quote(str(db_file)) + "?mode=ro"


def connect_read_only(db_file: Path | str) -> sqlite3.Connection:
    return sqlite3.connect(read_only_uri(db_file), uri=True)


@dataclass
class ColumnInfo:
    """One column: name, declared type, optional description, sampled values."""

    name: str
    data_type: str
    description: str | None = None
    value_examples: list[str] = field(default_factory=list)

    @property
    def is_text_type(self) -> bool:
        upper = self.data_type.upper()
        return any(marker in upper for marker in _TEXT_AFFINITY_MARKERS)


@dataclass
class TableInfo:
    """One table with its columns in declared order."""

    name: str
    columns: list[ColumnInfo] = field(default_factory=list)
    summary: str | None = None

    def column(self, name: str) -> ColumnInfo:
        for col in self.columns:
            if col.name == name:
                return col
        raise UnknownColumn(f"no column {name!r} in table {self.name!r}")

    def find_column(self, name: str) -> ColumnInfo | None:
        """Case-insensitive, whitespace-trimmed lookup."""
        wanted = name.strip().lower()
        for col in self.columns:
            if col.name.strip().lower() == wanted:
                return col
        return None


@dataclass
class DatabaseCatalog:
    """In-memory schema model of one benchmark database."""

    db_id: str
    tables: list[TableInfo] = field(default_factory=list)
    primary_keys: list[tuple[str, str]] = field(default_factory=list)
    foreign_keys: list[tuple[tuple[str, str], tuple[str, str]]] = field(default_factory=list)
    db_file_path: Path = Path()

    def table(self, name: str) -> TableInfo:
        for tbl in self.tables:
            if tbl.name == name:
                return tbl
        raise UnknownColumn(f"no table {name!r} in database {self.db_id!r}")

    def find_table(self, name: str) -> TableInfo | None:
        wanted = name.strip().lower()
        for tbl in self.tables:
            if tbl.name.strip().lower() == wanted:
                return tbl
        return None

    def qualified_columns(self) -> list[str]:
        """Every column as ``table.column``, in catalog order."""
        return [f"{tbl.name}.{col.name}" for tbl in self.tables for col in tbl.columns]

    def validate(self) -> None:
        names = [tbl.name for tbl in self.tables]
        if len(names) != len(set(names)):
            dupe = next(n for n in names if names.count(n) > 1)
            raise DuplicateTableName(f"table {dupe!r} appears more than once in {self.db_id!r}")
        for tbl in self.tables:
            col_names = [c.name for c in tbl.columns]
            if len(col_names) != len(set(col_names)):
                raise ValueError(f"duplicate column name in table {tbl.name!r}")
            for col in tbl.columns:
                if not col.name:
                    raise ValueError(f"empty column name in table {tbl.name!r}")
        for table, column in self.primary_keys:
            self.table(table).column(column)
        for (child_t, child_c), (parent_t, parent_c) in self.foreign_keys:
            self.table(child_t).column(child_c)
            self.table(parent_t).column(parent_c)
            if (child_t, child_c) == (parent_t, parent_c):
                raise ValueError(f"foreign key endpoints coincide: {child_t}.{child_c}")


def _render_value(value: object, cap: int) -> str:
    if isinstance(value, (str, bytes)):
        rendered = repr(value)
    else:
        rendered = str(value)
    if len(rendered) > cap:
        rendered = rendered[:cap] + "..."
    return rendered


def _scan_distinct(
    conn: sqlite3.Connection, table: str, column: str, k: int, scan_limit: int, cap: int
) -> list[str]:
    """First k distinct non-null values in storage order, rendered as text."""
    sql = (
        f"SELECT {_quote_ident(column)} FROM {_quote_ident(table)} "
        f"WHERE {_quote_ident(column)} IS NOT NULL LIMIT {int(scan_limit)}"
    )
    seen: list[object] = []
    rendered: list[str] = []
    cursor = conn.execute(sql)
    for (value,) in cursor:
        if value in seen:
            continue
        seen.append(value)
        rendered.append(_render_value(value, cap))
        if len(rendered) >= k:
            break
    return rendered


def sample_value_examples(
    catalog: DatabaseCatalog, table: str, column: str, k: int, config: IngestionConfig | None = None
) -> list[str]:
    """Re-sample up to ``k`` distinct non-null values for one column.

    Deterministic on an unchanged database: values come back in storage order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    config = config or IngestionConfig()
    catalog.table(table).column(column)  # raises UnknownColumn
    with connect_read_only(catalog.db_file_path) as conn:
        return _scan_distinct(conn, table, column, k, config.value_scan_limit, config.value_render_cap)


def _decode_description_file(path: Path) -> tuple[str, bool]:
    raw = path.read_bytes()
    for encoding in _DESCRIPTION_ENCODINGS:
        try:
            return raw.decode(encoding), False
        except UnicodeDecodeError:
            continue
    return raw.decode("utf-8", errors="replace"), True


def _apply_description_file(table: TableInfo, path: Path) -> list[str]:
    """Attach per-column descriptions from one BIRD-style CSV.

    Returns warnings. Raises MalformedDescriptionFile for structural problems
    or for a row naming a column that does not exist in the table.
    """
    warnings: list[str] = []
    text, lossy = _decode_description_file(path)
    if lossy:
        warnings.append(f"{path.name}: undecodable bytes replaced while reading")
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or "original_column_name" not in [
        f.strip() for f in reader.fieldnames
    ]:
        raise MalformedDescriptionFile(
            f"{path.name}: missing required header 'original_column_name'", file=str(path)
        )
    for row_no, row in enumerate(reader, start=2):
        cells = {(key or "").strip(): (val or "").strip() for key, val in row.items() if key}
        name = cells.get("original_column_name", "")
        if not name:
            warnings.append(f"{path.name} row {row_no}: blank column name, skipped")
            continue
        column = table.find_column(name)
        if column is None:
            raise MalformedDescriptionFile(
                f"{path.name} row {row_no}: column {name!r} not found in table {table.name!r}",
                file=str(path),
                row=row_no,
            )
        parts = [cells.get("column_description", ""), cells.get("value_description", "")]
        description = ". ".join(p for p in parts if p)
        if not description:
            friendly = cells.get("column_name", "")
            if friendly and friendly.lower() != column.name.lower():
                description = friendly
        if description:
            column.description = description
    return warnings


def _load_keys(
    conn: sqlite3.Connection, tables: list[TableInfo]
) -> tuple[list[tuple[str, str]], list[tuple[tuple[str, str], tuple[str, str]]], list[str]]:
    warnings: list[str] = []
    primary: list[tuple[str, str]] = []
    foreign: list[tuple[tuple[str, str], tuple[str, str]]] = []
    by_name = {tbl.name: tbl for tbl in tables}
    pk_order: dict[str, list[str]] = {}
    for tbl in tables:
        info = conn.execute(f"PRAGMA table_info({_quote_ident(tbl.name)})").fetchall()
        pk_cols = sorted((row[5], row[1]) for row in info if row[5])
        pk_order[tbl.name] = [name for _, name in pk_cols]
        primary.extend((tbl.name, name) for name in pk_order[tbl.name])
    for tbl in tables:
        fk_rows = conn.execute(f"PRAGMA foreign_key_list({_quote_ident(tbl.name)})").fetchall()
        for _, seq, ref_table, from_col, to_col, *_rest in fk_rows:
            parent = by_name.get(ref_table)
            if parent is None:
                warnings.append(f"foreign key {tbl.name}.{from_col} references unknown table {ref_table!r}, dropped")
                continue
            if to_col is None:
                ref_pks = pk_order.get(ref_table, [])
                to_col = ref_pks[seq] if seq < len(ref_pks) else None
            parent_col = parent.find_column(to_col) if to_col is not None else None
            if parent_col is None or tbl.find_column(from_col) is None:
                warnings.append(f"foreign key {tbl.name}.{from_col} -> {ref_table}.{to_col} does not resolve, dropped")
                continue
            foreign.append(((tbl.name, from_col), (ref_table, parent_col.name)))
    return primary, foreign, warnings


def load_catalog(
    bundle_root: Path | str,
    db_id: str,
    config: IngestionConfig | None = None,
    warnings_sink: list[str] | None = None,
) -> DatabaseCatalog:
    """Load ``<bundle_root>/<db_id>/<db_id>.sqlite`` into a catalog.

    Descriptions are joined from ``database_description/*.csv`` when present
    (case-insensitive column-name match); value examples are the first K
    distinct non-null values per column, K from ``config``.
    """
    config = config or IngestionConfig()
    warnings = warnings_sink if warnings_sink is not None else []
    bundle = Path(bundle_root) / db_id
    db_file = bundle / f"{db_id}.sqlite"
    if not db_file.is_file():
        raise MissingDatabaseFile(f"no database file at {db_file}")

    try:
        conn = connect_read_only(db_file)
    except sqlite3.Error as exc:
        raise DatabaseUnreadable(f"cannot open {db_file}: {exc}") from exc
    try:
        table_rows = conn.execute(
            "SELECT name FROM sqlite_master WHERE type = 'table' "
            "AND name NOT LIKE 'sqlite_%' ORDER BY rowid"
        ).fetchall()
        tables: list[TableInfo] = []
        for (table_name,) in table_rows:
            info = conn.execute(f"PRAGMA table_info({_quote_ident(table_name)})").fetchall()
            columns = [
                ColumnInfo(
                    name=row[1],
                    data_type=row[2] or "",
                    value_examples=_scan_distinct(
                        conn,
                        table_name,
                        row[1],
                        config.value_example_count,
                        config.value_scan_limit,
                        config.value_render_cap,
                    ),
                )
                for row in info
            ]
            tables.append(TableInfo(name=table_name, columns=columns))
        primary, foreign, key_warnings = _load_keys(conn, tables)
        warnings.extend(key_warnings)
    except sqlite3.Error as exc:
        raise DatabaseUnreadable(f"cannot scan {db_file}: {exc}") from exc
    finally:
        conn.close()

    catalog = DatabaseCatalog(
        db_id=db_id,
        tables=tables,
        primary_keys=primary,
        foreign_keys=foreign,
        db_file_path=db_file,
    )

    description_dir = bundle / "database_description"
    if description_dir.is_dir():
        by_lower = {tbl.name.lower(): tbl for tbl in tables}
        for csv_path in sorted(description_dir.glob("*.csv")):
            table = by_lower.get(csv_path.stem.strip().lower())
            if table is None:
                warnings.append(f"{csv_path.name}: no table named {csv_path.stem!r}, file skipped")
                continue
            warnings.extend(_apply_description_file(table, csv_path))

    for message in warnings:
        logger.warning("%s: %s", db_id, message)
    catalog.validate()
    return catalog


def _column_tuple(col: ColumnInfo, with_details: bool) -> str:
    parts = [f"{col.name}<{col.data_type}>"]
    if with_details:
        if col.description:
            parts.append(col.description)
        if col.value_examples:
            parts.append("Value examples: [" + ", ".join(col.value_examples) + "]")
    return "(" + ", ".join(parts) + ")"


def _key_ref(table: str, column: str) -> str:
    return f"{table}.`{column}`"


def render_primary_keys(catalog: DatabaseCatalog) -> str:
    """One ``table.`column``` per line."""
    return "\n".join(_key_ref(t, c) for t, c in catalog.primary_keys)


def render_foreign_keys(catalog: DatabaseCatalog) -> str:
    """One ``child.`col` = parent.`col``` per line."""
    return "\n".join(
        f"{_key_ref(ct, cc)} = {_key_ref(pt, pc)}" for (ct, cc), (pt, pc) in catalog.foreign_keys
    )


def serialize_schema(catalog: DatabaseCatalog, *, with_column_details: bool = True) -> str:
    """Render the catalog in the list-of-column-tuples schema grammar.

    Each table becomes ``name: [tuple, tuple, ...]``; tables are separated by
    ``|``, followed by a primary-keys block and a foreign-keys block. With
    ``with_column_details=False`` each tuple is elided to name and type only.
    """
    table_blocks = [
        f"{tbl.name}: [" + ", ".join(_column_tuple(c, with_column_details) for c in tbl.columns) + "]"
        for tbl in catalog.tables
    ]
    pk_block = "Primary keys: [" + ", ".join(_key_ref(t, c) for t, c in catalog.primary_keys) + "];"
    fk_block = (
        "Foreign keys: ["
        + ", ".join(f"{_key_ref(ct, cc)} = {_key_ref(pt, pc)}" for (ct, cc), (pt, pc) in catalog.foreign_keys)
        + "];"
    )
    return "|\n".join(table_blocks) + ";\n" + pk_block + "\n" + fk_block
