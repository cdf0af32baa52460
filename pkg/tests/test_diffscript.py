"""Tests for edit scripts over token sequences."""

import random

import pytest

from ccikit.detector import diff_tokens
from ccikit.diffscript import (
    ADD,
    ADD_END,
    KEEP,
    KEEP_END,
    REPLACE_END,
    REPLACE_NEW,
    REPLACE_OLD,
    EditScript,
    EditSpan,
    apply_edit_script,
    build_edit_script,
    comment_word_diff,
    matching_blocks,
    parse_edit_script,
    render_edit_script,
)
from ccikit.errors import DataError
from ccikit.lexing import TokenSeq, tokenize_comment


def longest_block_oracle(a, b):
    """Brute-force recursive longest-common-block decomposition."""
    blocks = []

    def recurse(alo, ahi, blo, bhi):
        best = (alo, blo, 0)
        for i in range(alo, ahi):
            for j in range(blo, bhi):
                k = 0
                while i + k < ahi and j + k < bhi and a[i + k] == b[j + k]:
                    k += 1
                if k > best[2]:
                    best = (i, j, k)
        i, j, k = best
        if k == 0:
            return
        recurse(alo, i, blo, j)
        blocks.append((i, j, k))
        recurse(i + k, ahi, j + k, bhi)

    recurse(0, len(a), 0, len(b))
    merged = []
    for block in blocks:
        if merged and merged[-1][0] + merged[-1][2] == block[0] and merged[-1][1] + merged[-1][2] == block[1]:
            last = merged.pop()
            block = (last[0], last[1], last[2] + block[2])
        merged.append(block)
    return merged + [(len(a), len(b), 0)]


def random_tokens(rng, alphabet="abcde", max_len=8):
    return [rng.choice(alphabet) for _ in range(rng.randint(0, max_len))]


# ============================================================================
# Matching blocks
# ============================================================================

class TestMatchingBlocks:
    def test_identity(self):
        assert matching_blocks(list("xyz"), list("xyz")) == [(0, 0, 3), (3, 3, 0)]

    def test_single_substitution(self):
        assert matching_blocks(["a", "b", "c"], ["a", "x", "c"]) == [(0, 0, 1), (2, 2, 1), (3, 3, 0)]

    def test_empty_side(self):
        assert matching_blocks([], ["q"]) == [(0, 1, 0)]

    def test_agrees_with_brute_force(self):
        rng = random.Random(11)
        for _ in range(300):
            a, b = random_tokens(rng, "abc"), random_tokens(rng, "abc")
            assert matching_blocks(a, b) == longest_block_oracle(a, b)

    def test_tie_break_prefers_earliest_old_then_new(self):
        # both "a" blocks in b have length 1; the earliest pairing wins
        assert matching_blocks(["a"], ["a", "a"]) == [(0, 0, 1), (1, 2, 0)]


# ============================================================================
# Build / render / parse / apply
# ============================================================================

class TestBuildEditScript:
    def test_substitution(self):
        script = build_edit_script(["a", "b", "c"], ["a", "x", "c"])
        assert script.spans == (EditSpan.keep(["a"]), EditSpan.replace(["b"], ["x"]), EditSpan.keep(["c"]))

    def test_identical(self):
        assert build_edit_script(list("abc"), list("abc")).spans == (EditSpan.keep(list("abc")),)

    def test_pure_insertion(self):
        assert build_edit_script(["a"], ["a", "b"]).spans == (EditSpan.keep(["a"]), EditSpan.add(["b"]))

    def test_pure_deletion(self):
        assert build_edit_script(["a", "b"], ["b"]).spans == (EditSpan.delete(["a"]), EditSpan.keep(["b"]))

    def test_both_empty(self):
        script = build_edit_script([], [])
        assert script.spans == ()
        assert render_edit_script(script).tokens == ()

    def test_reconstruction_invariants(self):
        rng = random.Random(5)
        for _ in range(300):
            old, new = random_tokens(rng), random_tokens(rng)
            script = build_edit_script(old, new)
            assert list(script.old_side()) == old
            assert list(script.new_side()) == new
            actions = [s.action for s in script.spans]
            assert all(x != y for x, y in zip(actions, actions[1:]))

    def test_malformed_spans_rejected(self):
        with pytest.raises(DataError):
            EditSpan("Keep", ("a",), ("b",))
        with pytest.raises(DataError):
            EditScript((EditSpan.keep(["a"]), EditSpan.keep(["b"])), 2, 2)


class TestRenderParse:
    def test_keep_rendering(self):
        assert render_edit_script(build_edit_script(["a"], ["a"])).tokens == (KEEP, "a", KEEP_END)

    def test_replace_rendering(self):
        script = EditScript((EditSpan.replace(["b"], ["x"]),), 1, 1)
        assert render_edit_script(script).tokens == (REPLACE_OLD, "b", REPLACE_NEW, "x", REPLACE_END)

    def test_marker_collision(self):
        with pytest.raises(DataError):
            render_edit_script(build_edit_script([ADD], [ADD, "x"]))

    def test_round_trip(self):
        rng = random.Random(8)
        for _ in range(300):
            script = build_edit_script(random_tokens(rng), random_tokens(rng))
            assert parse_edit_script(render_edit_script(script)) == script

    def test_parse_rejects_unclosed_span(self):
        with pytest.raises(DataError):
            parse_edit_script([ADD, "x"])

    def test_renamed_call_becomes_replace(self):
        old = "Set<Annotation> found = findMetaAnnotations(type, annotationType);"
        new = "Set<Annotation> found = findMetaAnnotationsRecursive(type, annotationType, visited);"
        tokens = diff_tokens(old, new).tokens
        start = tokens.index(REPLACE_OLD)
        middle = tokens.index(REPLACE_NEW, start)
        end = tokens.index(REPLACE_END, middle)
        assert "findMetaAnnotations" in tokens[start:middle]
        assert "findMetaAnnotationsRecursive" in tokens[middle:end]
        assert ADD in tokens and ADD_END in tokens


class TestApplyEditScript:
    def test_applies_to_its_old_side(self):
        script = build_edit_script(["a", "b", "c"], ["a", "x", "c"])
        assert apply_edit_script(script, ["a", "b", "c"]).tokens == ("a", "x", "c")

    def test_keep_only(self):
        assert apply_edit_script(EditScript((EditSpan.keep(["a"]),), 1, 1), TokenSeq.of(["a"])).tokens == ("a",)

    def test_wrong_old(self):
        script = build_edit_script(["a", "b", "c"], ["a", "x", "c"])
        with pytest.raises(DataError):
            apply_edit_script(script, ["a", "q", "c"])

    def test_random_round_trip(self):
        rng = random.Random(2024)
        for _ in range(1000):
            old, new = random_tokens(rng, "abcdef", 10), random_tokens(rng, "abcdef", 10)
            assert list(apply_edit_script(build_edit_script(old, new), old).tokens) == new


class TestCommentWordDiff:
    def test_single_substitution(self):
        pairs, unchanged = comment_word_diff(tokenize_comment("Check if"), tokenize_comment("Checks if"))
        assert pairs == [("Check", "Checks")]
        assert unchanged == 1

    def test_identical(self):
        words = tokenize_comment("returns the value")
        assert comment_word_diff(words, words) == ([], 3)

    def test_deletion_pairs_with_absent(self):
        assert comment_word_diff(["a", "b"], ["a"]) == ([("b", None)], 1)

    def test_uneven_gap(self):
        pairs, _ = comment_word_diff(["x", "p", "q", "y"], ["x", "r", "y"])
        assert pairs == [("p", "r"), ("q", None)]
