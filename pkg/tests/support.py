"""Shared test helpers: fixture bundles, scripted backends, parser oracles."""

from __future__ import annotations

import random
import re
import sqlite3
from collections import deque
from pathlib import Path

from sqlcascade.catalog import ColumnInfo, DatabaseCatalog, TableInfo
from sqlcascade.gateway import ChatRequest, ChatResponse, LlmGateway

# ---------------------------------------------------------------------------
# Scripted model backends

class ScriptedBackend:
    """Backend stub that serves canned responses per request tag, FIFO."""

    def __init__(self, script: dict[str, list[str]] | None = None, default: str | None = None):
        script = script or {}
        self.queues = {tag: deque(entries) for tag, entries in script.items()}
        self.default = default
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.requests.append(request)
        queue = self.queues.get(request.request_tag)
        if queue:
            content = queue.popleft()
        elif self.default is not None:
            content = self.default
        else:
            raise AssertionError(f"no scripted response left for tag {request.request_tag!r}")
        prompt_len = sum(len(m["content"]) for m in request.messages)
        return ChatResponse(
            content=content,
            prompt_tokens=prompt_len // 4,
            completion_tokens=len(content) // 4,
            source="live",
        )

    def prompts(self, tag: str) -> list[str]:
        return [
            r.messages[0]["content"] for r in self.requests if r.request_tag == tag
        ]

    def count(self, tag: str) -> int:
        return sum(1 for r in self.requests if r.request_tag == tag)


def scripted_gateway(
    script: dict[str, list[str]] | None = None, default: str | None = None
) -> tuple[LlmGateway, ScriptedBackend]:
    backend = ScriptedBackend(script, default=default)
    gateway = LlmGateway(mode="live", backend=backend, model_id="scripted")
    return gateway, backend


# ---------------------------------------------------------------------------
# Fixture bundles

MINI_SCHOOLS_SQL = """
CREATE TABLE schools (
    CDSCode TEXT PRIMARY KEY,
    School TEXT,
    City TEXT,
    Zip TEXT,
    County TEXT
);
CREATE TABLE frpm (
    CDSCode TEXT PRIMARY KEY,
    "District Name" TEXT,
    "Charter School (Y/N)" INTEGER,
    "Enrollment (K-12)" REAL,
    "Free Meal Count (K-12)" REAL,
    FOREIGN KEY (CDSCode) REFERENCES schools(CDSCode)
);
INSERT INTO schools VALUES
    ('0110001', 'Epic Charter Academy', 'Fresno', '93701', 'Fresno'),
    ('0110002', 'Riverbend Elementary', 'Fresno', '93702', 'Fresno'),
    ('0110003', 'Sierra Vista High', 'Clovis', '93611', 'Fresno'),
    ('0110004', 'Golden Valley Charter', 'Sacramento', '95814', 'Sacramento'),
    ('0110005', 'Lakeshore Middle', 'Oakland', '94601', 'Alameda');
INSERT INTO frpm VALUES
    ('0110001', 'Fresno County Office of Education', 1, 320.0, 180.0),
    ('0110002', 'Fresno Unified', 0, 540.0, 390.0),
    ('0110003', 'Clovis Unified', 0, 1210.0, 470.0),
    ('0110004', 'Sacramento County Office of Education', 1, 610.0, 220.0),
    ('0110005', 'Oakland Unified', 1, 450.0, 310.0);
"""

MINI_SCHOOLS_DESCRIPTIONS = {
    "schools": [
        ("CDSCode", "", "unique identifier of the school in CDS format", "text", ""),
        ("School", "School Name", "name of the school", "text", ""),
        ("City", "", "city where the school is located", "text", ""),
        ("Zip", "Zip Code", "postal zip code of the school", "text", ""),
        ("County", "", "county where the school is located", "text", ""),
    ],
    "frpm": [
        ("CDSCode", "", "school code in CDS format", "text", ""),
        ("District Name", "", "name of the district that operates the school", "text", ""),
        ("Charter School (Y/N)", "", "whether the school is a charter school", "integer", "0: N; 1: Y"),
        ("Enrollment (K-12)", "", "enrollment for grades K through 12", "real", ""),
        ("Free Meal Count (K-12)", "", "free meal count for grades K through 12", "real", ""),
    ],
}

DESCRIPTION_HEADER = "original_column_name,column_name,column_description,data_format,value_description"


def write_description_csv(path: Path, rows: list[tuple[str, str, str, str, str]]) -> None:
    def quote(cell: str) -> str:
        if any(ch in cell for ch in ',"\n'):
            return '"' + cell.replace('"', '""') + '"'
        return cell

    lines = [DESCRIPTION_HEADER]
    lines.extend(",".join(quote(cell) for cell in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def make_bundle(root: Path, db_id: str, setup_sql: str, descriptions=None) -> Path:
    """Create ``<root>/<db_id>/<db_id>.sqlite`` (+ optional description CSVs)."""
    bundle = root / db_id
    bundle.mkdir(parents=True, exist_ok=True)
    db_file = bundle / f"{db_id}.sqlite"
    if db_file.exists():
        db_file.unlink()
    conn = sqlite3.connect(db_file)
    conn.executescript(setup_sql)
    conn.commit()
    conn.close()
    if descriptions:
        desc_dir = bundle / "database_description"
        desc_dir.mkdir(exist_ok=True)
        for table, rows in descriptions.items():
            write_description_csv(desc_dir / f"{table}.csv", rows)
    return bundle


def create_mini_schools(root: Path) -> Path:
    """The miniature two-table bundle used by retrieval and replay tests."""
    return make_bundle(root, "mini_schools", MINI_SCHOOLS_SQL, MINI_SCHOOLS_DESCRIPTIONS)


# ---------------------------------------------------------------------------
# Grammar-parser oracle for the schema serialization

_TABLE_BLOCK = re.compile(r"^(?P<name>.+?): \[(?P<cols>.*)$", re.DOTALL)


def parse_serialized_schema(text: str) -> dict:
    """Independent parser over the serialization grammar.

    Recovers table names, per-table column counts, and key arities. Only
    meant for catalogs whose names/descriptions avoid the grammar's own
    separators (the randomized-oracle generators guarantee that).
    """
    match = re.fullmatch(
        r"(?s)(?P<tables>.*);\nPrimary keys: \[(?P<pks>.*)\];\nForeign keys: \[(?P<fks>.*)\];",
        text,
    )
    assert match is not None, "key blocks missing or out of order"
    blocks = match.group("tables").split("]|\n")
    tables: list[tuple[str, int]] = []
    for index, block in enumerate(blocks):
        if index == len(blocks) - 1:
            assert block.endswith("]"), "last table block must close its column list"
            block = block[:-1]
        table_match = _TABLE_BLOCK.match(block)
        assert table_match is not None, f"unparseable table block: {block!r}"
        cols_text = table_match.group("cols")
        column_count = len(cols_text.split("), (")) if cols_text else 0
        tables.append((table_match.group("name"), column_count))
    pks = match.group("pks")
    fks = match.group("fks")
    return {
        "tables": tables,
        "pk_count": len(pks.split(", ")) if pks else 0,
        "fk_count": len(fks.split(", ")) if fks else 0,
    }


_SAFE_WORDS = ("alpha", "beta", "gamma", "delta", "omega", "kappa", "sigma", "theta")
_TYPES = ("INTEGER", "TEXT", "REAL", "DATE")


def random_catalog(rng: random.Random) -> DatabaseCatalog:
    """Small random catalog with grammar-safe names for the round-trip oracle."""
    tables = []
    for t_index in range(rng.randint(1, 5)):
        columns = []
        for c_index in range(rng.randint(1, 6)):
            description = None
            if rng.random() < 0.6:
                description = " ".join(rng.sample(_SAFE_WORDS, rng.randint(1, 3)))
            examples = []
            if rng.random() < 0.7:
                examples = [str(rng.randint(0, 999)) for _ in range(rng.randint(1, 3))]
            columns.append(
                ColumnInfo(
                    name=f"col{c_index}_{rng.choice(_SAFE_WORDS)}",
                    data_type=rng.choice(_TYPES),
                    description=description,
                    value_examples=examples,
                )
            )
        tables.append(TableInfo(name=f"table{t_index}_{rng.choice(_SAFE_WORDS)}", columns=columns))
    all_columns = [(tbl.name, col.name) for tbl in tables for col in tbl.columns]
    primary = [rng.choice(all_columns)] if rng.random() < 0.8 else []
    foreign = []
    if len(all_columns) >= 2 and rng.random() < 0.7:
        child, parent = rng.sample(all_columns, 2)
        foreign.append((child, parent))
    return DatabaseCatalog(
        db_id=f"db_{rng.choice(_SAFE_WORDS)}",
        tables=tables,
        primary_keys=primary,
        foreign_keys=foreign,
        db_file_path=Path("unused.sqlite"),
    )


# ---------------------------------------------------------------------------
# Matched-value line parser (round-trip oracle)

_MATCH_LINE = re.compile(r"^(?P<table>[^.`]+)\.`(?P<column>[^`]+)` = '(?P<value>(?:[^']|'')*)';$")


def parse_matched_value_lines(text: str) -> list[tuple[str, str, str]]:
    triples = []
    for line in text.splitlines():
        match = _MATCH_LINE.fullmatch(line)
        assert match is not None, f"unparseable matched-value line: {line!r}"
        triples.append(
            (match.group("table"), match.group("column"), match.group("value").replace("''", "'"))
        )
    return triples


# ---------------------------------------------------------------------------
# Hand-verified execution-accuracy fixture: 10 items, 7 correct => EX 70.00

GRADES_SQL = """
CREATE TABLE students (id INTEGER PRIMARY KEY, name TEXT, score REAL, class_id INTEGER);
CREATE TABLE classes (id INTEGER PRIMARY KEY, subject TEXT);
CREATE TABLE awards (student_id INTEGER, prize TEXT, FOREIGN KEY(student_id) REFERENCES students(id));
INSERT INTO students VALUES (1,'Ana',0.3,1),(2,'Bob',0.25,1),(3,'Cal',0.9,2),(4,'Dee',0.55,2);
INSERT INTO classes VALUES (1,'math'),(2,'physics');
INSERT INTO awards VALUES (1,'gold'),(3,'silver'),(3,'gold');
"""

RUNAWAY_SQL = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT COUNT(*) FROM c"

# (gold, pred, difficulty, expected_verdict, expected_reason); verdicts were
# established by hand against the rows above.
EVAL_CASES = [
    ("SELECT name FROM students ORDER BY id", "SELECT name FROM students ORDER BY id",
     "simple", "correct", None),
    ("SELECT name FROM students ORDER BY name ASC", "SELECT name FROM students ORDER BY name DESC",
     "simple", "correct", None),  # order-insensitive comparison
    ("SELECT 0.3", "SELECT 0.1 + 0.2", "simple", "correct", None),  # float tolerance
    ("SELECT name FROM students WHERE id IN (1, 3)",
     "SELECT name FROM students WHERE id = 1 OR id = 3", "simple", "correct", None),
    ("SELECT score FROM students WHERE id = 3", "SELECT score AS s FROM students WHERE id = 3",
     "moderate", "correct", None),
    ("SELECT s.name FROM students AS s JOIN awards AS a ON a.student_id = s.id WHERE a.prize = 'gold'",
     "SELECT name FROM students WHERE id IN (SELECT student_id FROM awards WHERE prize = 'gold')",
     "moderate", "correct", None),
    ("SELECT name FROM students ORDER BY score DESC LIMIT 1",
     "SELECT name FROM students WHERE score = (SELECT MAX(score) FROM students)",
     "moderate", "correct", None),
    ("SELECT COUNT(*) FROM students", "SELEC COUNT(*) FROM students",
     "challenging", "incorrect", "pred_error"),
    ("SELECT name FROM students WHERE class_id = 1", "SELECT name FROM students",
     "challenging", "incorrect", "mismatch"),
    ("SELECT 1", RUNAWAY_SQL, "challenging", "incorrect", "pred_timeout"),
]


def build_eval_fixture(root: Path):
    """Bundle + items + predictions for the EX-70.00 scoring fixture."""
    from sqlcascade.evaluation import BenchmarkItem

    make_bundle(root, "grades", GRADES_SQL)
    items = []
    predictions = {}
    for index, (gold, pred, difficulty, _verdict, _reason) in enumerate(EVAL_CASES):
        items.append(
            BenchmarkItem(
                question_id=index,
                db_id="grades",
                question=f"fixture question {index}",
                gold_sql=gold,
                difficulty=difficulty,
            )
        )
        predictions[str(index)] = pred
    return items, predictions


# ---------------------------------------------------------------------------
# Prompt slot sequences (the paper-template section markers, in order)

SLOT_SEQUENCES = {
    "table_summary": ["DB_ID", "Schema", "Summary"],
    "entity_linking": [
        "DB_ID", "Schema", "Primary keys", "Foreign keys",
        "Question", "Evidence", "Matched values", "Answer",
    ],
    "decompose": ["Query", "Evidence", "Decomposition"],
    "generate_first": [
        "Constraints", "Database schema", "Primary keys", "Foreign keys",
        "Detailed descriptions of tables and columns", "Evidence", "Question", "Matched values",
    ],
    "generate_next": [
        "Constraints", "Database schema", "Primary keys", "Foreign keys",
        "Detailed descriptions of tables and columns", "Evidence", "Question",
        "Subquestion", "Sub-SQL", "Matched values",
    ],
    "refine": [
        "Instruction", "Constraints", "Response format", "Attention",
        "Evidence", "Query", "Database info", "Primary keys", "Foreign keys",
        "Detailed descriptions of tables and columns", "old SQL", "SQLite error",
        "Exception class", "correct SQL",
    ],
}


def assert_slots_in_order(prompt: str, template_name: str) -> None:
    position = 0
    for name in SLOT_SEQUENCES[template_name]:
        index = prompt.find(f"[{name}]", position)
        assert index >= 0, f"slot [{name}] missing (or out of order) in {template_name} prompt"
        position = index + 1


# ---------------------------------------------------------------------------
# Golden prompt capture: drive the real agents over a fixed demo catalog

def demo_catalog() -> DatabaseCatalog:
    return DatabaseCatalog(
        db_id="demo_db",
        tables=[
            TableInfo(
                "artists",
                [
                    ColumnInfo("id", "INTEGER", "artist identifier", ["1", "2"]),
                    ColumnInfo("name", "TEXT", "artist name", ["'Ana'", "'Bob'"]),
                ],
            ),
            TableInfo(
                "tracks",
                [
                    ColumnInfo("id", "INTEGER", None, ["7"]),
                    ColumnInfo("artist_id", "INTEGER", "owning artist", ["1"]),
                    ColumnInfo("title", "TEXT", "track title", ["'Blue'"]),
                ],
            ),
        ],
        primary_keys=[("artists", "id"), ("tracks", "id")],
        foreign_keys=[(("tracks", "artist_id"), ("artists", "id"))],
        db_file_path=Path("demo.sqlite"),
    )


def golden_prompt_set() -> dict[str, str]:
    """Assemble one prompt per agent template through the real agent code."""
    from sqlcascade.catalog import render_foreign_keys, render_primary_keys
    from sqlcascade.decomposer import decompose
    from sqlcascade.execution import ExecutionOutcome
    from sqlcascade.generation import GenerationContext, SqlCandidate, generate_first_sub_sql, generate_next_sub_sql, refine
    from sqlcascade.linker import build_soft_schema, link_entities, summarize_tables
    from sqlcascade.prompts import load_asset

    catalog = demo_catalog()
    script = {
        "linker.summarize": ['{"artists": "One row per artist.", "tracks": "One row per track."}'],
        "linker.link": [
            '```json\n{"track titles": ["tracks.title", "tracks.id", "artists.name"], '
            '"Ana": ["artists.name", "artists.id", "tracks.artist_id"]}\n```'
        ],
        "decomposer.decompose": ["##List the track titles.\n##List the track titles by Ana."],
        "generator.first": ["```sql\nSELECT title FROM tracks\n```"],
        "generator.next": [
            "```sql\nSELECT T1.title FROM tracks AS T1 INNER JOIN artists AS T2 "
            "ON T1.artist_id = T2.id WHERE T2.name = 'Ana'\n```"
        ],
        "refiner.refine": ["Correct SQL:\n```sql\nSELECT title FROM tracks\n```"],
    }
    gateway, backend = scripted_gateway(script)
    question = "List the track titles by Ana."
    evidence = "Ana is an artist name"
    matched_values = "artists.`name` = 'Ana';"

    summaries = summarize_tables(catalog, gateway)
    links = link_entities(question, evidence, catalog, summaries, matched_values, gateway)
    soft = build_soft_schema(catalog, links, matched_values)
    chain = decompose(question, evidence, gateway)
    ctx = GenerationContext(
        db_id=catalog.db_id,
        soft_schema=soft,
        primary_keys_text=render_primary_keys(catalog),
        foreign_keys_text=render_foreign_keys(catalog),
        evidence=evidence,
        question=question,
        matched_values_text=matched_values,
        constraints_text=load_asset("generation_constraints"),
    )
    first = generate_first_sub_sql(ctx, chain.sub_questions[0], gateway)
    generate_next_sub_sql(ctx, chain.sub_questions[0], first.sql, chain.sub_questions[1], gateway)
    refine(
        ctx,
        SqlCandidate(sql="SELECT titel FROM tracks", stage="first"),
        ExecutionOutcome(status="error", error_message="no such column: titel", exception_class="OperationalError"),
        gateway,
        sub_question=chain.sub_questions[1],
    )
    return {
        "table_summary": backend.prompts("linker.summarize")[0],
        "entity_linking": backend.prompts("linker.link")[0],
        "decompose": backend.prompts("decomposer.decompose")[0],
        "generate_first": backend.prompts("generator.first")[0],
        "generate_next": backend.prompts("generator.next")[0],
        "refine": backend.prompts("refiner.refine")[0],
    }
