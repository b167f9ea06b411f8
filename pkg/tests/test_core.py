"""Core formatting, parsing, and comparison rules."""

from __future__ import annotations

import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gfp import core
from gfp.core import (
    EmptyHint,
    InvalidProblem,
    NoMarkerAndNotNumeric,
    NumericTolerance,
    Problem,
    Stage,
    TrainPair,
    UnparsableNumber,
    build_code_input,
    join_hints,
    load_problems,
    numbers_match,
    parse_gold_answer,
    problem_from_gsm8k,
    sanitize_hint,
    split_hints,
    write_problems,
)

# Separator-free alphabet: the round-trip guarantee is stated for hints that
# cannot contain '&' or '#' at all.
_SEP_FREE = st.characters(blacklist_characters="&#", blacklist_categories=("Cs",))


def _maybe_sanitize(raw: str) -> str | None:
    try:
        return sanitize_hint(raw)
    except EmptyHint:
        return None


sanitized_hints = (
    st.text(alphabet=_SEP_FREE, min_size=1, max_size=40)
    .map(_maybe_sanitize)
    .filter(lambda h: h is not None)
)
hint_lists = st.lists(sanitized_hints, max_size=6)
questions = (
    st.text(alphabet=_SEP_FREE, min_size=1, max_size=80)
    .map(str.strip)
    .filter(bool)
)


class TestSanitizeHint:
    def test_hint_separator_replaced(self):
        assert sanitize_hint("needs 3 & 4 eggs") == "needs 3, 4 eggs"

    def test_identity_for_plain_hint(self):
        assert sanitize_hint("plain hint") == "plain hint"

    def test_section_separator_replaced(self):
        assert sanitize_hint("a ## b") == "a, b"

    def test_adjacent_separators_cannot_recombine(self):
        out = sanitize_hint("a & & b")
        assert core.HINT_SEPARATOR not in out
        assert core.SECTION_SEPARATOR not in out

    def test_whitespace_collapsed_and_trimmed(self):
        assert sanitize_hint("  a \t b\n c  ") == "a b c"

    def test_tab_separated_ampersand_does_not_survive_collapse(self):
        # "a\t&\tb" carries no literal " & " but whitespace collapse would
        # create one; sanitize must leave no token either way.
        assert core.HINT_SEPARATOR not in sanitize_hint("a\t&\tb")

    def test_empty_after_sanitization_raises(self):
        with pytest.raises(EmptyHint):
            sanitize_hint("   ")

    @given(st.text(min_size=1, max_size=60))
    def test_output_is_token_free_and_idempotent(self, raw):
        try:
            once = sanitize_hint(raw)
        except EmptyHint:
            return
        assert core.HINT_SEPARATOR not in once
        assert core.SECTION_SEPARATOR not in once
        assert sanitize_hint(once) == once


class TestJoinSplit:
    def test_join_two(self):
        assert join_hints(["h1", "h2"]) == "h1 & h2"

    def test_join_single(self):
        assert join_hints(["only"]) == "only"

    def test_join_empty(self):
        assert join_hints([]) == ""

    def test_split_two(self):
        assert split_hints("h1 & h2") == ["h1", "h2"]

    def test_split_trims(self):
        assert split_hints("  h1  ") == ["h1"]

    def test_split_empty(self):
        assert split_hints("") == []

    def test_split_drops_empty_pieces(self):
        assert split_hints(" h1 &  h2 & ") == ["h1", "h2"]

    @given(hint_lists)
    def test_round_trip(self, hints):
        assert split_hints(join_hints(hints)) == hints


class TestBuildCodeInput:
    def test_paper_format(self):
        assert build_code_input("Q?", ["h1", "h2"]) == "Q? ## h1 & h2"

    def test_empty_hints_pass_question_through(self):
        assert build_code_input("Q?", []) == "Q?"

    def test_single_hint(self):
        assert build_code_input("Q?", ["h"]) == "Q? ## h"

    @given(questions, hint_lists)
    def test_single_section_separator_or_identity(self, question, hints):
        out = build_code_input(question, hints)
        if hints:
            assert out.count(core.SECTION_SEPARATOR) == 1
        else:
            assert out == question


# Format check against real GSM8K-style answer fields: multi-line rationale
# with calculator annotations, final line "#### <number>".
GSM8K_STYLE_ANSWERS = [
    (
        "Janet sells 16 - 3 - 4 = <<16-3-4=9>>9 duck eggs a day.\n"
        "She makes 9 * 2 = $<<9*2=18>>18 every day at the farmer's market.\n"
        "#### 18",
        18.0,
    ),
    (
        "He writes each friend 3*2=<<3*2=6>>6 pages a week.\n"
        "That is 6*52=<<6*52=312>>312 pages a year.\n#### 312",
        312.0,
    ),
    (
        "The raise is 40000*.05=$<<40000*.05=2000>>2000.\n"
        "New salary is 40000+2000=$<<40000+2000=42000>>42,000.\n#### 42,000",
        42000.0,
    ),
    ("She loses 5 - 8 = <<5-8=-3>>-3 points.\n#### -3", -3.0),
    ("Half of 7 is 7/2 = <<7/2=3.5>>3.5 cups.\n#### 3.5", 3.5),
]


class TestParseGoldAnswer:
    @pytest.mark.parametrize("field,expected", GSM8K_STYLE_ANSWERS)
    def test_gsm8k_format_samples(self, field, expected):
        assert parse_gold_answer(field) == expected

    def test_thousands_separator(self):
        assert parse_gold_answer("#### 1,234") == 1234.0

    def test_bare_number(self):
        assert parse_gold_answer("42") == 42.0

    def test_marker_takes_last_occurrence(self):
        assert parse_gold_answer("#### 5 is wrong\nReally:\n#### 6") == 6.0

    def test_no_marker_not_numeric(self):
        with pytest.raises(NoMarkerAndNotNumeric):
            parse_gold_answer("the answer is six")

    def test_marker_with_garbage(self):
        with pytest.raises(UnparsableNumber):
            parse_gold_answer("steps\n#### banana")

    def test_marker_with_empty_tail(self):
        with pytest.raises(UnparsableNumber):
            parse_gold_answer("steps\n#### ")

    @given(st.integers(min_value=-(10**9), max_value=10**9))
    def test_roundtrip_formatted_integers(self, n):
        assert parse_gold_answer(f"some steps\n#### {n}") == float(n)


class TestNumbersMatch:
    def test_exact_equality(self):
        assert numbers_match(18.0, 18)

    def test_near_third_within_tolerance(self):
        # |0.333333 - 1/3| = 3.33e-7 <= max(1e-6, 1e-6/3): a match.
        assert abs(0.333333 - 1 / 3) <= 1e-6
        assert numbers_match(0.333333, 1 / 3) is True

    def test_gross_mismatch(self):
        assert not numbers_match(5, 6)

    def test_relative_term_scales_with_gold(self):
        tol = NumericTolerance(absolute=0.0, relative=1e-3)
        assert numbers_match(1000.5, 1000.0, tol)
        assert not numbers_match(1001.5, 1000.0, tol)

    def test_non_finite_never_matches(self):
        assert not numbers_match(math.inf, 5.0)
        assert not numbers_match(math.nan, math.nan)

    @given(
        st.floats(allow_nan=False, allow_infinity=False, min_value=-1e9, max_value=1e9),
        st.floats(allow_nan=False, allow_infinity=False, min_value=-1e9, max_value=1e9),
        st.floats(min_value=0, max_value=1),
        st.floats(min_value=0, max_value=1),
    )
    def test_matches_stated_formula(self, predicted, gold, absolute, relative):
        tol = NumericTolerance(absolute=absolute, relative=relative)
        expected = abs(predicted - gold) <= max(absolute, relative * abs(gold))
        assert numbers_match(predicted, gold, tol) == expected


class TestTypes:
    def test_problem_requires_nonempty_question(self):
        with pytest.raises(InvalidProblem):
            Problem(id="a", question="  \n ", gold_answer=1.0)

    def test_problem_requires_finite_gold(self):
        with pytest.raises(InvalidProblem):
            Problem(id="a", question="q", gold_answer=math.inf)

    def test_problem_requires_id(self):
        with pytest.raises(InvalidProblem):
            Problem(id="", question="q", gold_answer=1.0)

    def test_train_pair_requires_nonempty_fields(self):
        with pytest.raises(ValueError):
            TrainPair(Stage.HINT_GEN, "", "t")
        with pytest.raises(ValueError):
            TrainPair(Stage.CODE_GEN, "i", "")

    def test_tolerance_rejects_negative(self):
        with pytest.raises(ValueError):
            NumericTolerance(absolute=-1.0)


class TestCorpusIo:
    def _problems(self):
        return [
            Problem("p1", "How many eggs?", 18.0, "sol text"),
            Problem("p2", "How many pages?", 312.0, None),
        ]

    def test_round_trip(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_problems(self._problems(), path)
        assert load_problems(path) == self._problems()

    def test_canonical_record_shape(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_problems(self._problems(), path)
        first = json.loads(path.read_text().splitlines()[0])
        assert first == {"id": "p1", "question": "How many eggs?",
                         "solution": "sol text", "gold": 18.0}

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        records = [{"id": "x", "question": "q", "solution": None, "gold": 1}] * 2
        path.write_text("\n".join(json.dumps(r) for r in records))
        with pytest.raises(InvalidProblem, match="duplicate"):
            load_problems(path)

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "x", "question": "q", "solution": null, "gold": 1}\nnot json\n')
        with pytest.raises(InvalidProblem, match="line 2"):
            load_problems(path)

    def test_problem_from_gsm8k(self):
        p = problem_from_gsm8k("t1", "Janet has ducks.", GSM8K_STYLE_ANSWERS[0][0])
        assert p.gold_answer == 18.0
        assert p.reference_solution.startswith("Janet sells")
