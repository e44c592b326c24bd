"""Pydantic request/response models for the HTTP surface."""

from __future__ import annotations

from typing import Any, List, Optional

from pydantic import BaseModel, Field

from ..db.gateway import QueryResult
from ..evaluator import EvaluationOutcome, PipelineOutcome
from ..generator import GenerationOutcome


class QueryResultModel(BaseModel):
    columns: List[str]
    rows: List[List[Any]]
    truncated: bool

    @classmethod
    def from_result(cls, r: QueryResult) -> "QueryResultModel":
        return cls(
            columns=list(r.columns),
            rows=[list(row) for row in r.rows],
            truncated=r.truncated,
        )


class AttemptModel(BaseModel):
    iteration: int
    executed_query: str
    rows_returned: Optional[int]
    error: Optional[str]
    observation: str
    modified_prompt: str


class EvaluationModel(BaseModel):
    query: str
    result: QueryResultModel
    iterations_used: int
    early_accepted: bool
    attempts: List[AttemptModel]

    @classmethod
    def from_outcome(cls, o: EvaluationOutcome) -> "EvaluationModel":
        return cls(
            query=o.query,
            result=QueryResultModel.from_result(o.result),
            iterations_used=o.iterations_used,
            early_accepted=o.early_accepted,
            attempts=[AttemptModel(**a.__dict__) for a in o.attempts],
        )


class GenerationModel(BaseModel):
    description: str
    query: str
    strategy: str
    context_source: str

    @classmethod
    def from_outcome(cls, o: GenerationOutcome) -> "GenerationModel":
        return cls(
            description=o.description,
            query=o.query,
            strategy=o.strategy.name,
            context_source=o.context.source.name,
        )


class PipelineModel(BaseModel):
    generation: GenerationModel
    evaluation: EvaluationModel

    @classmethod
    def from_outcome(cls, o: PipelineOutcome) -> "PipelineModel":
        return cls(
            generation=GenerationModel.from_outcome(o.generation),
            evaluation=EvaluationModel.from_outcome(o.evaluation),
        )


class InferenceRequest(BaseModel):
    prompt: str = ""
    query: str = ""  # evaluation-only entry point
    schema_key: str = "schemaDescription"


class ChatCompletionMessage(BaseModel):
    role: str
    content: str = ""


class ChatCompletionRequest(BaseModel):
    model: str = ""
    messages: List[ChatCompletionMessage] = Field(default_factory=list)
    stream: bool = False
    temperature: Optional[float] = None
    chat_id: Optional[str] = None


class CompletionRequest(BaseModel):
    model: str = ""
    prompt: str = ""
    stream: bool = False
    chat_id: Optional[str] = None
