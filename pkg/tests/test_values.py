import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import support
from sqlcascade.config import RetrievalConfig
from sqlcascade.errors import DatabaseUnreadable
from sqlcascade.values import (
    MatchedValue,
    format_matched_values,
    longest_common_substring,
    retrieve_matched_values,
)


def brute_force_lcs_length(a: str, b: str) -> int:
    """All-substrings enumeration oracle."""
    subs_a = {a[i:j] for i in range(len(a)) for j in range(i + 1, len(a) + 1)}
    subs_b = {b[i:j] for i in range(len(b)) for j in range(i + 1, len(b) + 1)}
    common = subs_a & subs_b
    return max((len(s) for s in common), default=0)


def test_lcs_empty_input():
    assert longest_common_substring("", "anything") == (0, "")
    assert longest_common_substring("anything", "") == (0, "")
    assert longest_common_substring("", "") == (0, "")


def test_lcs_identity():
    assert longest_common_substring("abcdef", "abcdef") == (6, "abcdef")


def test_lcs_returns_common_substring():
    length, sub = longest_common_substring("xxhello worldyy", "say hello world!")
    assert (length, sub) == (11, "hello world")


def test_lcs_tie_breaks_earliest_start():
    # "ab" and "cd" are both common with length 2: the earlier one in a wins
    length, sub = longest_common_substring("ab__cd", "cd##ab")
    assert (length, sub) == (2, "ab")


def test_lcs_against_brute_force_sample():
    rng = random.Random(1234)
    alphabet = "abcdefgh"
    for _ in range(200):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
        length, sub = longest_common_substring(a, b)
        assert length == brute_force_lcs_length(a, b)
        assert sub in a and sub in b and len(sub) == length


@settings(max_examples=150, deadline=None)
@given(st.text(alphabet="abcd", max_size=25), st.text(alphabet="abcd", max_size=25))
def test_lcs_length_properties(a, b):
    length_ab, _ = longest_common_substring(a, b)
    length_ba, _ = longest_common_substring(b, a)
    assert length_ab == length_ba
    assert length_ab <= min(len(a), len(b))
    one_contains_other = (a and a in b) or (b and b in a) or (not a) or (not b)
    assert (length_ab == min(len(a), len(b))) == bool(one_contains_other)


def test_retrieval_worked_example(mini_catalog):
    question = "Please list the zip code of all the charter schools in Fresno County Office of Education"
    matches = retrieve_matched_values(question, "", mini_catalog)
    top = matches[0]
    assert (top.table, top.column, top.value) == (
        "frpm", "District Name", "Fresno County Office of Education",
    )
    assert top.score == len("Fresno County Office of Education")
    assert top.source_span == "Fresno County Office of Education"


def test_retrieval_no_overlap_returns_empty(mini_catalog):
    matches = retrieve_matched_values("wxyz qqqq jjjj", "", mini_catalog)
    assert matches == []


def test_retrieval_single_synthetic_match(tmp_path):
    support.make_bundle(
        tmp_path,
        "toy",
        "CREATE TABLE t(a TEXT, b INTEGER);"
        "INSERT INTO t VALUES ('maplestreet', 7), ('zzz', 8);",
    )
    from sqlcascade.catalog import load_catalog

    catalog = load_catalog(tmp_path, "toy")
    matches = retrieve_matched_values("turn left on maplestreet today", "", catalog)
    assert len(matches) == 1
    (match,) = matches
    assert (match.table, match.column, match.value, match.score) == ("t", "a", "maplestreet", 11)


def test_retrieval_ignores_non_text_columns(tmp_path):
    support.make_bundle(
        tmp_path,
        "toy",
        "CREATE TABLE t(a INTEGER, b TEXT);"
        "INSERT INTO t VALUES (123456789, 'unrelated');",
    )
    from sqlcascade.catalog import load_catalog

    catalog = load_catalog(tmp_path, "toy")
    matches = retrieve_matched_values("123456789", "", catalog)
    assert matches == []


def test_retrieval_scans_evidence_too(mini_catalog):
    matches = retrieve_matched_values(
        "Which schools qualify?", "qualifying district is Fresno Unified", mini_catalog
    )
    assert any(m.value == "Fresno Unified" for m in matches)


def test_retrieval_respects_thresholds(mini_catalog):
    strict = RetrievalConfig(min_match_len=40)
    assert retrieve_matched_values("Fresno County Office of Education", "", mini_catalog, strict) == []
    capped = RetrievalConfig(max_matches=1)
    matches = retrieve_matched_values("Fresno County Office of Education", "", mini_catalog, capped)
    assert len(matches) == 1


def test_retrieval_case_insensitive_match_keeps_original_case(mini_catalog):
    matches = retrieve_matched_values("schools in fresno county office of education", "", mini_catalog)
    assert matches[0].value == "Fresno County Office of Education"


def test_retrieval_unreadable_database(tmp_path, mini_catalog):
    from dataclasses import replace

    broken = replace(mini_catalog, db_file_path=tmp_path / "missing" / "nope.sqlite")
    with pytest.raises(DatabaseUnreadable):
        retrieve_matched_values("anything", "", broken)


def test_format_worked_example():
    match = MatchedValue(
        table="frpm",
        column="District Name",
        value="Fresno County Office of Education",
        score=33,
        source_span="Fresno County Office of Education",
    )
    assert format_matched_values([match]) == (
        "frpm.`District Name` = 'Fresno County Office of Education';"
    )


def test_format_empty():
    assert format_matched_values([]) == ""


def test_format_escapes_single_quote():
    match = MatchedValue("t", "name", "O'Neill County", 7, "O'Neill")
    assert format_matched_values([match]) == "t.`name` = 'O''Neill County';"


def test_format_round_trip():
    matches = [
        MatchedValue("frpm", "District Name", "Fresno County Office of Education", 33, "x"),
        MatchedValue("t", "name", "O'Neill County", 7, "x"),
        MatchedValue("schools", "City", "Fresno", 6, "x"),
    ]
    text = format_matched_values(matches)
    triples = support.parse_matched_value_lines(text)
    assert triples == [(m.table, m.column, m.value) for m in matches]
