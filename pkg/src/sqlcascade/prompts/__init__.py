"""Prompt template assets and the slot-filling helper.

Templates live under ``assets/`` as plain text. A slot is a line consisting
of exactly ``[Name]``; filling keeps the bracketed header and inserts the
value on the following lines, so assembled prompts still show every section
marker. Bracketed names mentioned inline (inside a sentence or a bullet)
are never treated as slots. Headers that are not filled stay as-is: several
templates use them as section titles over static text.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from typing import Mapping

TEMPLATE_NAMES = (
    "entity_linking",
    "table_summary",
    "decompose",
    "generate_first",
    "generate_next",
    "refine",
)

ASSET_NAMES = TEMPLATE_NAMES + (
    "generation_constraints",
    "demos_first_step",
    "demos_next_step",
)


@lru_cache(maxsize=None)
def load_asset(name: str) -> str:
    if name not in ASSET_NAMES:
        raise KeyError(f"unknown prompt asset {name!r}")
    path = resources.files(__package__) / "assets" / f"{name}.txt"
    return path.read_text(encoding="utf-8")


def fill(template: str, slots: Mapping[str, str]) -> str:
    """Replace each whole-line ``[Name]`` slot with the header plus its value.

    Raises KeyError if a provided slot name has no matching line: that means
    the template and the calling code drifted apart.
    """
    pending = dict(slots)
    out_lines: list[str] = []
    for line in template.splitlines():
        stripped = line.strip()
        key = stripped[1:-1] if stripped.startswith("[") and stripped.endswith("]") else None
        if key is not None and key in pending:
            value = pending.pop(key).rstrip("\n")
            out_lines.append(f"[{key}]")
            out_lines.append(value)
        else:
            out_lines.append(line)
    if pending:
        missing = ", ".join(sorted(pending))
        raise KeyError(f"slots not present in template: {missing}")
    return "\n".join(out_lines)


def assemble(template_name: str, slots: Mapping[str, str]) -> str:
    return fill(load_asset(template_name), slots)
