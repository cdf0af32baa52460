from __future__ import annotations

import logging
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from ccikit.errors import DataError


logger = logging.getLogger(__name__)

CommentType = Literal["return", "param", "summary"]
Split = Literal["train", "valid", "test"]
Verdict = Literal["inconsistent", "consistent", "unparseable"]

CONSISTENT = 0
INCONSISTENT = 1


class CciCase(BaseModel):
    """One code-comment change record.

    Unknown fields are kept (``extra="allow"``) so that a corpus written back
    out carries every field it was read with.
    """
    model_config = ConfigDict(extra="allow")

    id: str
    comment_type: CommentType
    old_comment: str
    new_comment: Optional[str] = None
    old_code: str
    new_code: str
    label: Optional[Literal[0, 1]] = None
    split: Optional[Split] = None
    synthetic: bool = False
    parent_id: Optional[str] = None

    @field_validator("id", "old_comment", "old_code", "new_code")
    @classmethod
    def ensure_nonempty(cls, v: str, info) -> str:
        if not v or not v.strip():
            raise ValueError(f"{info.field_name} must be nonempty")
        return v

    @model_validator(mode="after")
    def synthetic_needs_parent(self) -> "CciCase":
        if self.synthetic and not self.parent_id:
            raise ValueError("synthetic case requires parent_id")
        return self

    @property
    def is_positive(self) -> bool:
        return self.label == INCONSISTENT

    def to_json_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude_unset=True)


class MalformedLine(BaseModel):
    line_no: int
    error: str


class Corpus(BaseModel):
    cases: List[CciCase] = Field(default_factory=list)
    source_path: Optional[str] = None
    malformed: List[MalformedLine] = Field(default_factory=list)

    _index: Optional[Dict[str, CciCase]] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def ids_unique(self) -> "Corpus":
        seen = set()
        for case in self.cases:
            if case.id in seen:
                raise ValueError(f"duplicate case id: {case.id}")
            seen.add(case.id)
        return self

    def __len__(self) -> int:
        return len(self.cases)

    def by_id(self) -> Dict[str, CciCase]:
        if self._index is None:
            self._index = {c.id: c for c in self.cases}
        return self._index

    def with_cases(self, cases: List[CciCase]) -> "Corpus":
        return Corpus(cases=list(cases), source_path=self.source_path)

    def split(self, name: str) -> "Corpus":
        return self.with_cases([c for c in self.cases if c.split == name])

    def check_synthetic_parents(self) -> None:
        """Every synthetic case must point at a non-synthetic case in this corpus."""
        index = self.by_id()
        for case in self.cases:
            if not case.synthetic:
                continue
            parent = index.get(case.parent_id or "")
            if parent is None or parent.synthetic:
                raise DataError(f"synthetic case {case.id} has invalid parent_id={case.parent_id}")


class DedupReport(BaseModel):
    schema_version: int = 1
    groups_found: int = 0
    removed_ids: List[str] = Field(default_factory=list)
    retained_by_true_label: int = 0
    tie_break: str = "first-occurrence"


class HygieneViolation(BaseModel):
    quadruple_key: str
    ids_by_split: Dict[str, List[str]]


class HygieneReport(BaseModel):
    schema_version: int = 1
    violations: List[HygieneViolation] = Field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.violations


class CorpusStats(BaseModel):
    schema_version: int = 1
    total: int
    by_type_split: Dict[str, Dict[str, int]]
    by_label: Dict[str, int]
    synthetic: int


FilterRule = Literal["TypoFix", "CaseChange", "StopwordChange", "LexicalChange", "None"]
WordPair = Tuple[Optional[str], Optional[str]]


class FilterVerdict(BaseModel):
    rule: FilterRule = "None"
    evidence: List[WordPair] = Field(default_factory=list)

    @model_validator(mode="after")
    def rule_matches_evidence(self) -> "FilterVerdict":
        if (self.rule == "None") != (not self.evidence):
            raise ValueError("rule=None iff evidence is empty")
        return self


class FilterRemoval(BaseModel):
    case_id: str
    verdict: FilterVerdict


class FilterReport(BaseModel):
    schema_version: int = 1
    counts: Dict[str, int] = Field(
        default_factory=lambda: {"TypoFix": 0, "CaseChange": 0, "StopwordChange": 0, "LexicalChange": 0}
    )
    removed: List[FilterRemoval] = Field(default_factory=list)
    unmatched_mixed_ids: List[str] = Field(default_factory=list)

    @property
    def total_removed(self) -> int:
        return sum(self.counts.values())


class ShotExample(BaseModel):
    case: CciCase
    gold_verdict: Literal["consistent", "inconsistent"]
    inconsistency_kind: Optional[Literal["return_type", "method_signature", "application_logic"]] = None


class VoteRecord(BaseModel):
    case_id: str
    verdicts: List[Tuple[str, Verdict]]
    decision: Literal["keep", "discard"]
    unanimous: bool


class Prediction(BaseModel):
    case_id: str
    probability: float
    verdict: Literal["inconsistent", "consistent"]
    comment_vector: List[float] = Field(default_factory=list, exclude=True)
    code_vector: List[float] = Field(default_factory=list, exclude=True)


class FixResult(BaseModel):
    case_id: str
    predicted_comment: Optional[str] = None
    backend: str
    latency_s: float = Field(ge=0.0)
    error: Optional[str] = None

    @model_validator(mode="after")
    def comment_or_error(self) -> "FixResult":
        if self.error is None and not (self.predicted_comment or "").strip():
            raise ValueError("predicted_comment must be nonempty")
        return self
