from __future__ import annotations

import json
from pathlib import Path

import pytest

from sqlcascade.catalog import load_catalog

import golden_data
import support

FIXTURES_DIR = Path(__file__).parent / "fixtures"
GOLDENS_DIR = Path(__file__).parent / "goldens"


@pytest.fixture(scope="session")
def mini_bundle_root(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("bundles")
    support.create_mini_schools(root)
    return root


@pytest.fixture(scope="session")
def mini_catalog(mini_bundle_root):
    return load_catalog(mini_bundle_root, "mini_schools")


@pytest.fixture(scope="session")
def mini_questions_file(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("questions") / "mini_questions.json"
    path.write_text(
        json.dumps(golden_data.MINI_QUESTIONS, ensure_ascii=False, indent=2), encoding="utf-8"
    )
    return path
