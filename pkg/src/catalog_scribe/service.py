"""HTTP service: generation endpoints, the steward review queue and metrics.

The service never auto-approves anything; a human decision is the only way
an item leaves the pending state, and each response carries the full
expansion/retrieval trace so stewards can judge provenance.
"""

from __future__ import annotations

from typing import Literal

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from pydantic import BaseModel, Field

from .catalog import ColumnAsset, ColumnKey, load_any
from .config import AppConfig
from .errors import InputError, ProviderError
from .eval_suite import CopyInputs, FeedbackRecord, summarize
from .pipeline import Engine, build_engine
from .store import (
    AlreadyDecidedError,
    DecisionValidationError,
    NotFoundError,
    ReviewDecision,
    ReviewStore,
    VersionConflictError,
)
from .vector_index import load_index


class DescribeColumnRequest(BaseModel):
    key: str | None = None
    column_name: str | None = None
    table_name: str | None = None
    data_source: str | None = None
    comment: str | None = None
    glossary_terms: list[str] | None = None


class DescribeTableRequest(BaseModel):
    table_name: str
    data_source: str
    business_context: str | None = None


class DecisionRequest(BaseModel):
    final_text: str = Field(min_length=1)
    label: Literal["accept_as_is", "minor_edit", "major_edit"]
    steward_id: str = "anonymous"
    expected_version: int


def create_app(engine: Engine, store: ReviewStore) -> FastAPI:
    app = FastAPI(title="catalog-scribe", version="0.1.0")
    token = engine.config.service.bearer_token

    def check_auth(authorization: str | None = Header(default=None)) -> None:
        if token and authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    auth = Depends(check_auth)

    def resolve_column(request: DescribeColumnRequest) -> ColumnAsset:
        if request.key:
            try:
                key = ColumnKey.from_str(request.key)
            except InputError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            column = engine.catalog.column(key)
            if column is None:
                raise HTTPException(status_code=404, detail=f"unknown column {request.key}")
            return column
        if request.column_name and request.table_name and request.data_source:
            return ColumnAsset(
                column_name=request.column_name,
                table_name=request.table_name,
                data_source=request.data_source,
                comment=request.comment,
            )
        raise HTTPException(
            status_code=422,
            detail="provide either a key or column_name/table_name/data_source",
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "pending": len(store.list_items(status="pending"))}

    @app.post("/v1/columns/describe", dependencies=[auth])
    def describe_column(request: DescribeColumnRequest) -> dict:
        column = resolve_column(request)
        try:
            result = engine.describe_column(column, glossary_terms=request.glossary_terms)
        except ProviderError as exc:
            raise HTTPException(
                status_code=502,
                detail=f"generation provider failed after {exc.attempts} attempts: {exc}",
            ) from exc
        item = store.create_item(
            asset_kind="column",
            asset_key=column.key.as_str(),
            generation=result.record,
            trace=result.trace_dict(),
            created_at=engine.clock(),
        )
        return item.to_dict()

    @app.post("/v1/tables/describe", dependencies=[auth])
    def describe_table(request: DescribeTableRequest) -> dict:
        table = engine.catalog.table(request.table_name, request.data_source)
        if table is None:
            raise HTTPException(
                status_code=404,
                detail=f"unknown table {request.table_name} in {request.data_source}",
            )
        try:
            result = engine.describe_table(table, business_context=request.business_context)
        except ProviderError as exc:
            raise HTTPException(
                status_code=502,
                detail=f"generation provider failed after {exc.attempts} attempts: {exc}",
            ) from exc
        except InputError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        item = store.create_item(
            asset_kind="table",
            asset_key=f"{request.data_source}::{request.table_name}",
            generation=result.record,
            trace=result.trace_dict(),
            created_at=engine.clock(),
        )
        return item.to_dict()

    @app.get("/v1/reviews", dependencies=[auth])
    def list_reviews(
        status: str | None = Query(default=None),
        limit: int = Query(default=50, ge=1, le=500),
        offset: int = Query(default=0, ge=0),
    ) -> list[dict]:
        return [item.to_dict() for item in store.list_items(status=status, limit=limit, offset=offset)]

    @app.get("/v1/reviews/{item_id}", dependencies=[auth])
    def get_review(item_id: str) -> dict:
        try:
            return store.get(item_id).to_dict()
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/v1/reviews/{item_id}/decision", dependencies=[auth])
    def decide_review(item_id: str, request: DecisionRequest) -> dict:
        decision = ReviewDecision(
            final_text=request.final_text,
            label=request.label,
            steward_id=request.steward_id,
            decided_at=engine.clock(),
        )
        try:
            item = store.decide(item_id, decision, request.expected_version)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except DecisionValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except (AlreadyDecidedError, VersionConflictError) as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return item.to_dict()

    @app.get("/v1/metrics", dependencies=[auth])
    def metrics() -> dict:
        decided = store.decided_items()
        records = [
            FeedbackRecord(
                generation_ref=item.id,
                final_text=item.decision.final_text,
                label=item.decision.label,
                rouge_vs_generation=item.rouge_vs_generation,
            )
            for item in decided
            if item.decision and item.rouge_vs_generation
        ]
        generations = {item.id: item.generation for item in decided}
        copy_inputs = {
            item.id: CopyInputs(
                example_texts=tuple(item.trace.get("example_texts", ())),
                comment=item.trace.get("comment"),
            )
            for item in decided
        }
        report = summarize(
            records,
            generations=generations,
            copy_inputs=copy_inputs,
            provider=engine.embedder,
        )
        return report.to_dict()

    return app


def app_from_config(config: AppConfig, mock: str | None = None) -> FastAPI:
    """Assemble the whole service from a config file's paths."""
    if not config.catalog_path:
        raise InputError("config needs catalog_path to serve")
    catalog = load_any(config.catalog_path)
    index = None
    if config.index_path:
        from .pipeline import make_embedder

        index = load_index(config.index_path, provider=make_embedder(config))
    engine = build_engine(config, catalog, index=index, mock=mock)
    store = ReviewStore(config.service.journal_path)
    return create_app(engine, store)
