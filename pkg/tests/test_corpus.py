"""Tests for corpus IO, normalization, de-duplication and split hygiene."""

import os

import orjson
import pytest

from ccikit.corpus import check_split_hygiene, corpus_stats, deduplicate, load_corpus, save_corpus
from ccikit.errors import DataError
from ccikit.file_writer import JsonlWriter, read_json, write_json
from ccikit.models import Corpus, DedupReport
from ccikit.text_utils import first_comment_block, normalize_text, strip_code_fences
from tests.conftest import build_case, write_jsonl


# ============================================================================
# Text normalization
# ============================================================================

class TestNormalizeText:
    """Whitespace normalization used for grouping."""

    def test_control_whitespace_becomes_space(self):
        assert normalize_text("foo\tbar\n") == "foo bar"

    def test_runs_collapse_and_trim(self):
        assert normalize_text("  a   b ") == "a b"

    def test_empty(self):
        assert normalize_text("") == ""

    def test_tab_never_glues_words(self):
        assert normalize_text("return\tx;") == "return x;"


class TestCompletionCleanup:
    def test_fenced_block_body(self):
        assert strip_code_fences("Here:\n```java\n/** Returns x. */\n```\nDone") == "/** Returns x. */"

    def test_unfenced_text_is_trimmed(self):
        assert strip_code_fences("  plain  ") == "plain"

    def test_first_comment_block_prefers_javadoc(self):
        text = "Sure.\n/** @return the size */\nExplanation follows."
        assert first_comment_block(text) == "/** @return the size */"

    def test_first_comment_block_first_paragraph(self):
        assert first_comment_block("@return the size\n\nThis changed because...") == "@return the size"


# ============================================================================
# Loading and saving
# ============================================================================

class TestLoadCorpus:
    def test_preserves_order(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [build_case("c"), build_case("a"), build_case("b")])
        corpus = load_corpus(path)
        assert [c.id for c in corpus.cases] == ["c", "a", "b"]
        assert corpus.source_path == path

    def test_duplicate_id_names_the_id(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [build_case("x1"), build_case("x1")])
        with pytest.raises(DataError, match="x1"):
            load_corpus(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_bytes(b"")
        assert len(load_corpus(str(path))) == 0

    def test_malformed_line_aborts_with_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_bytes(orjson.dumps(build_case("ok").to_json_dict()) + b"\n{not json\n")
        with pytest.raises(DataError, match=":2:"):
            load_corpus(str(path))

    def test_permissive_skips_and_reports(self, tmp_path):
        good = orjson.dumps(build_case("ok").to_json_dict())
        missing_code = orjson.dumps({"id": "bad", "comment_type": "return", "old_comment": "x", "old_code": "", "new_code": "y"})
        path = tmp_path / "mixed.jsonl"
        path.write_bytes(good + b"\n" + missing_code + b"\n")
        corpus = load_corpus(str(path), permissive=True)
        assert [c.id for c in corpus.cases] == ["ok"]
        assert [m.line_no for m in corpus.malformed] == [2]

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(DataError):
            load_corpus(str(tmp_path / "missing.jsonl"))

    def test_unknown_fields_survive_a_round_trip(self, tmp_path):
        path = write_jsonl(tmp_path / "in.jsonl", [dict(build_case("k").to_json_dict(), project="mongo")])
        out = str(tmp_path / "out.jsonl")
        save_corpus(load_corpus(path), out)
        assert orjson.loads(open(out, "rb").readline())["project"] == "mongo"


class TestCaseSchema:
    def test_synthetic_requires_parent(self):
        with pytest.raises(ValueError):
            build_case("s", synthetic=True)

    def test_blank_code_rejected(self):
        with pytest.raises(ValueError):
            build_case("s", new_code="   ")

    def test_corpus_rejects_duplicate_ids(self):
        with pytest.raises(ValueError):
            Corpus(cases=[build_case("a"), build_case("a")])

    def test_synthetic_parent_must_be_original(self):
        corpus = Corpus(
            cases=[
                build_case("p"),
                build_case("s1", synthetic=True, parent_id="p"),
                build_case("s2", synthetic=True, parent_id="s1"),
            ]
        )
        with pytest.raises(DataError, match="s2"):
            corpus.check_synthetic_parents()


# ============================================================================
# De-duplication
# ============================================================================

class TestDeduplicate:
    def test_true_label_preferred(self):
        corpus = Corpus(cases=[build_case("neg", label=0), build_case("pos", label=1)])
        out, report = deduplicate(corpus)
        assert [c.id for c in out.cases] == ["pos"]
        assert report.removed_ids == ["neg"]
        assert report.retained_by_true_label == 1
        assert report.groups_found == 1

    def test_whitespace_variants_group_and_first_wins(self):
        a = build_case("a", old_code="int f() {\treturn 1; }", label=0)
        b = build_case("b", old_code="int f() { return 1; }", label=0)
        out, report = deduplicate(Corpus(cases=[a, b]))
        assert [c.id for c in out.cases] == ["a"]
        assert report.retained_by_true_label == 0

    def test_no_duplicates_is_identity(self):
        corpus = Corpus(cases=[build_case("a"), build_case("b", new_comment="@return the new count")])
        out, report = deduplicate(corpus)
        assert out.cases == corpus.cases
        assert report.groups_found == 0
        assert report.removed_ids == []

    def test_idempotent_and_counts_balance(self):
        cases = [build_case(f"c{i}", label=i % 2, old_comment=f"@return value {i % 3}") for i in range(9)]
        once, report = deduplicate(Corpus(cases=cases))
        twice, second = deduplicate(once)
        assert [c.id for c in twice.cases] == [c.id for c in once.cases]
        assert second.removed_ids == []
        assert len(once) + len(report.removed_ids) == len(cases)
        assert not set(report.removed_ids) & {c.id for c in once.cases}

    def test_requires_new_comment(self):
        with pytest.raises(DataError):
            deduplicate(Corpus(cases=[build_case("a", new_comment=None)]))

    def test_report_defaults(self):
        assert DedupReport().tie_break == "first-occurrence"


class TestSplitHygiene:
    def test_leak_across_splits(self):
        corpus = Corpus(cases=[build_case("tr", split="train"), build_case("te", split="test")])
        report = check_split_hygiene(corpus)
        assert len(report.violations) == 1
        assert report.violations[0].ids_by_split == {"train": ["tr"], "test": ["te"]}

    def test_disjoint_is_clean(self):
        corpus = Corpus(
            cases=[build_case("tr", split="train"), build_case("te", split="test", old_comment="@return other")]
        )
        assert check_split_hygiene(corpus).clean

    def test_intra_split_duplicate_is_not_a_leak(self):
        corpus = Corpus(cases=[build_case("a", split="train"), build_case("b", split="train")])
        assert check_split_hygiene(corpus).clean

    def test_unassigned_split(self):
        with pytest.raises(DataError):
            check_split_hygiene(Corpus(cases=[build_case("a")]))


class TestCorpusStats:
    def test_counts_by_type_split_and_label(self):
        corpus = Corpus(
            cases=[
                build_case("a", split="train", label=1),
                build_case("b", comment_type="param", split="test", label=0),
                build_case("c", comment_type="summary", label=None),
            ]
        )
        stats = corpus_stats(corpus)
        assert stats.total == 3
        assert stats.by_type_split["return"]["train"] == 1
        assert stats.by_type_split["param"]["test"] == 1
        assert stats.by_type_split["summary"]["unassigned"] == 1
        assert stats.by_type_split["full"]["total"] == 3
        assert stats.by_label == {"consistent": 1, "inconsistent": 1, "unlabeled": 1}


# ============================================================================
# Output writing
# ============================================================================

class TestJsonlWriter:
    def test_partial_file_renamed_on_close(self, tmp_path):
        path = str(tmp_path / "out" / "records.jsonl")
        writer = JsonlWriter(path)
        writer.write({"a": 1})
        assert os.path.exists(path + ".inprogress")
        assert not os.path.exists(path)
        writer.close()
        assert not os.path.exists(path + ".inprogress")
        assert not os.path.exists(path + ".partial")
        assert open(path, "rb").read() == b'{"a":1}\n'

    def test_models_are_serialized(self, tmp_path):
        path = str(tmp_path / "cases.jsonl")
        with JsonlWriter(path) as writer:
            assert writer.write_all([build_case("a"), build_case("b")]) == 2
        assert [orjson.loads(line)["id"] for line in open(path, "rb")] == ["a", "b"]

    def test_json_documents_are_byte_stable(self, tmp_path):
        first, second = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        write_json(first, {"b": 1, "a": DedupReport(groups_found=2)})
        write_json(second, {"a": DedupReport(groups_found=2), "b": 1})
        assert open(first, "rb").read() == open(second, "rb").read()
        assert read_json(first)["a"]["groups_found"] == 2
