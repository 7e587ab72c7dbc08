"""Context evaluation router."""

from fastapi import APIRouter, HTTPException, status

from app.core.errors import ParseError
from app.schemas.context import ContextEvalRequest, ContextReport
from app.services.context_service import evaluate_context
from app.services.spec_service import parse_spec

router = APIRouter()


@router.post("/eval", response_model=ContextReport)
def eval_context(request: ContextEvalRequest):
    """Per-role RRC and fitness of a context, plus its group membership verdict."""
    try:
        spec = parse_spec(request.document)
    except ParseError as e:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    return evaluate_context(spec, request.context)
