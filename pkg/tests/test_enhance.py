"""Tests for error sampling, teacher synthesis and the enhancement loop."""

import orjson
import pytest

from ccikit.config import EnhanceConfig, LlmEndpoint
from ccikit.corpus import deduplicate
from ccikit.detector import build_vocabulary, init_model
from ccikit.enhance import (
    build_synthesis_prompt,
    iterative_enhance,
    parse_synthetic,
    sample_errors,
    synthesize_cases,
)
from ccikit.errors import DataError, HttpStatusError
from ccikit.models import Corpus, Prediction
from tests.conftest import StubGateway, build_case

TEACHER = LlmEndpoint(name="teacher", provider="replay")


def generated(n=2, prefix="gen"):
    return [
        {
            "old_comment": f"@return the {prefix} handle {j}",
            "new_comment": f"@return the {prefix} cursor {j}",
            "old_code": f"public Handle {prefix}{j}() {{ return h; }}",
            "new_code": f"public Cursor {prefix}{j}() {{ return c; }}",
        }
        for j in range(n)
    ]


def fixed_teacher(payload):
    return StubGateway(lambda endpoint, messages: payload)


def positives(n, prefix="p"):
    return [
        build_case(
            f"{prefix}{i}",
            old_comment=f"@return the DBObject number {i}",
            new_comment=f"@return the Document number {i}",
            old_code=f"public DBObject get{i}() {{ return db; }}",
            new_code=f"public Document get{i}() {{ return doc; }}",
            label=1,
            split="train",
        )
        for i in range(n)
    ]


class AlwaysConsistent:
    def predict(self, case):
        return Prediction(case_id=case.id, probability=0.1, verdict="consistent")


class Oracle:
    def predict(self, case):
        verdict = "inconsistent" if case.label == 1 else "consistent"
        return Prediction(case_id=case.id, probability=float(case.label), verdict=verdict)


def stub_trainer(predictor, calls):
    def trainer(model_init, corpus, config):
        calls.append((model_init, len(corpus)))
        return predictor, []

    return trainer


# ============================================================================
# Sampling
# ============================================================================

class TestSampleErrors:
    def test_ceiling_of_rate(self):
        corpus = Corpus(cases=positives(20))
        ids = [c.id for c in corpus.cases]
        first = sample_errors(ids, corpus, 0.1, seed=3)
        assert len(first) == 2
        assert [c.id for c in first] == [c.id for c in sample_errors(ids, corpus, 0.1, seed=3)]

    def test_at_least_one(self):
        corpus = Corpus(cases=positives(3))
        assert len(sample_errors(["p0", "p1", "p2"], corpus, 0.1, seed=0)) == 1

    def test_synthetic_cases_are_not_eligible(self):
        cases = positives(2) + [build_case("s", synthetic=True, parent_id="p0", label=1)]
        picked = sample_errors(["s", "p1"], Corpus(cases=cases), 1.0, seed=0)
        assert [c.id for c in picked] == ["p1"]

    def test_empty(self):
        assert sample_errors([], Corpus(cases=positives(2)), 0.5, seed=0) == []


# ============================================================================
# Prompt and parsing
# ============================================================================

class TestBuildSynthesisPrompt:
    def test_assembly(self):
        case = positives(1)[0]
        system, user = build_synthesis_prompt(case, generations=3)
        assert "vary identifiers" in system.content
        assert "Generate 3 new examples" in user.content
        assert "INCONSISTENT" in user.content
        assert case.old_code in user.content
        assert '"old_comment", "new_comment", "old_code" and "new_code"' in user.content

    def test_unlabeled(self):
        with pytest.raises(DataError):
            build_synthesis_prompt(build_case("u", label=None))

    def test_synthetic(self):
        with pytest.raises(DataError):
            build_synthesis_prompt(build_case("s", synthetic=True, parent_id="p", label=1))

    def test_missing_new_comment(self):
        with pytest.raises(DataError):
            build_synthesis_prompt(build_case("n", new_comment=None, label=1))


class TestParseSynthetic:
    def test_fenced_array(self):
        parent = positives(1)[0]
        text = "Here you go:\n```json\n" + orjson.dumps(generated()).decode() + "\n```"
        cases = parse_synthetic(text, parent, 0, set(), 2)
        assert len(cases) == 2
        assert all(c.synthetic and c.parent_id == "p0" and c.label == 1 for c in cases)
        assert all(c.comment_type == parent.comment_type and c.split == "train" for c in cases)

    def test_limit(self):
        assert len(parse_synthetic(orjson.dumps(generated(5)).decode(), positives(1)[0], 0, set(), 2)) == 2

    def test_ids_avoid_collisions(self):
        parent = positives(1)[0]
        taken = {"p0~syn0.0"}
        cases = parse_synthetic(orjson.dumps(generated(1)).decode(), parent, 0, taken, 2)
        assert cases[0].id == "p0~syn0.0.2"

    def test_missing_old_code_is_dropped(self, caplog):
        items = generated()
        del items[0]["old_code"]
        cases = parse_synthetic(orjson.dumps(items).decode(), positives(1)[0], 0, set(), 2)
        assert len(cases) == 1
        assert "synth-item-dropped" in caplog.text

    @pytest.mark.parametrize("field", ["old_comment", "new_comment", "old_code", "new_code"])
    def test_incomplete_item_is_dropped(self, field, caplog):
        items = generated()
        del items[1][field]
        cases = parse_synthetic(orjson.dumps(items).decode(), positives(1)[0], 0, set(), 2)
        assert [c.id for c in cases] == ["p0~syn0.0"]
        assert f"missing:{field}" in caplog.text

    def test_blank_or_non_string_fields_are_dropped(self):
        items = generated(3)
        items[0]["new_comment"] = "   "
        items[1]["new_code"] = 42
        cases = parse_synthetic(orjson.dumps(items).decode(), positives(1)[0], 0, set(), 3)
        assert [c.id for c in cases] == ["p0~syn0.2"]

    def test_enhanced_corpus_survives_dedup(self):
        items = generated()
        del items[0]["new_comment"]
        cases = parse_synthetic(orjson.dumps(items).decode(), positives(1)[0], 0, set(), 2)
        deduped, report = deduplicate(Corpus(cases=positives(1) + cases))
        assert len(deduped) == 2
        assert report.groups_found == 0

    def test_malformed_json(self, caplog):
        cases = parse_synthetic("[{not json", positives(1)[0], 0, set(), 2)
        assert cases == []
        assert sum(1 for r in caplog.records if "synth-unparseable" in r.getMessage()) == 1


class TestSynthesizeCases:
    def test_two_per_parent(self):
        gateway = fixed_teacher(orjson.dumps(generated()).decode())
        out = synthesize_cases(TEACHER, positives(3), gateway=gateway)
        assert len(out) == 6
        assert [c.parent_id for c in out] == ["p0", "p0", "p1", "p1", "p2", "p2"]
        assert len({c.id for c in out}) == 6

    def test_failed_request_skips_parent(self):
        def responder(endpoint, messages):
            if "get1()" in messages[-1].content:
                raise HttpStatusError("teacher", 500)
            return orjson.dumps(generated()).decode()

        out = synthesize_cases(TEACHER, positives(3), gateway=StubGateway(responder))
        assert {c.parent_id for c in out} == {"p0", "p2"}

    def test_nothing_sampled(self):
        gateway = fixed_teacher("[]")
        assert synthesize_cases(TEACHER, [], gateway=gateway) == []
        assert gateway.calls == []


# ============================================================================
# The loop
# ============================================================================

class TestIterativeEnhance:
    def test_zero_iterations_returns_d0(self):
        d0 = Corpus(cases=positives(5))
        calls = []
        final, history = iterative_enhance(
            object(),
            d0,
            TEACHER,
            EnhanceConfig(max_iterations=0),
            trainer=stub_trainer(AlwaysConsistent(), calls),
            gateway=fixed_teacher("[]"),
        )
        assert final.cases == d0.cases
        assert history[0].stop_reason == "max-iterations"

    def test_growth_over_two_iterations(self):
        d0 = Corpus(cases=positives(20) + [build_case("n0", label=0, split="train")])
        init = object()
        calls = []
        final, history = iterative_enhance(
            init,
            d0,
            TEACHER,
            EnhanceConfig(max_iterations=2, sampling_rate=0.1, convergence_delta=None),
            trainer=stub_trainer(AlwaysConsistent(), calls),
            gateway=fixed_teacher(orjson.dumps(generated()).decode()),
        )
        assert [r.corpus_size for r in history] == [21, 25, 29]
        assert len(final) == len(d0) + sum(r.synthesized for r in history)
        assert history[-1].stop_reason == "max-iterations"
        # every round starts from the same initial model
        assert all(model is init for model, _ in calls)
        original_ids = {c.id for c in d0.cases}
        assert original_ids <= {c.id for c in final.cases}
        for case in final.cases:
            if case.synthetic:
                assert case.parent_id in original_ids
        final.check_synthetic_parents()

    def test_convergence_stops_the_loop(self):
        d0 = Corpus(cases=positives(10))
        final, history = iterative_enhance(
            object(),
            d0,
            TEACHER,
            EnhanceConfig(max_iterations=5, convergence_delta=1e-3),
            trainer=stub_trainer(AlwaysConsistent(), []),
            gateway=fixed_teacher(orjson.dumps(generated()).decode()),
        )
        assert [r.stop_reason for r in history] == [None, "converged"]
        assert len(final) == 12

    def test_no_errors_stops_early(self):
        d0 = Corpus(cases=positives(4))
        gateway = fixed_teacher("[]")
        _, history = iterative_enhance(
            object(), d0, TEACHER, EnhanceConfig(max_iterations=3), trainer=stub_trainer(Oracle(), []), gateway=gateway
        )
        assert history[-1].stop_reason == "no-errors"
        assert gateway.calls == []

    def test_echoed_parents_are_left_for_dedup(self):
        d0 = Corpus(cases=positives(10))
        by_code = {c.old_code: c for c in d0.cases}

        def echo(endpoint, messages):
            parent = next(c for code, c in by_code.items() if code in messages[-1].content)
            return orjson.dumps([{f: getattr(parent, f) for f in ("old_comment", "new_comment", "old_code", "new_code")}]).decode()

        final, history = iterative_enhance(
            object(),
            d0,
            TEACHER,
            EnhanceConfig(max_iterations=1, convergence_delta=None),
            trainer=stub_trainer(AlwaysConsistent(), []),
            gateway=StubGateway(echo),
        )
        assert history[0].synthesized == 1
        assert len(final) == 11
        _, report = deduplicate(final)
        assert report.groups_found == 1

    def test_unlabeled_d0(self):
        with pytest.raises(DataError):
            iterative_enhance(object(), Corpus(cases=[build_case("u", label=None)]), TEACHER, gateway=fixed_teacher("[]"))

    def test_with_the_real_detector(self, toy_corpus, tiny_detector_config):
        model0 = init_model(tiny_detector_config, build_vocabulary(toy_corpus, tiny_detector_config))
        final, history = iterative_enhance(
            model0,
            toy_corpus,
            TEACHER,
            EnhanceConfig(max_iterations=1, sampling_rate=0.5, convergence_delta=None),
            tiny_detector_config,
            gateway=fixed_teacher(orjson.dumps(generated()).decode()),
        )
        assert len(history) in (1, 2)
        assert len(final) == len(toy_corpus) + sum(r.synthesized for r in history)
