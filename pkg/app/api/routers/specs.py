"""Specification router."""

from fastapi import APIRouter, HTTPException, status

from app.core.errors import ParseError, SoisError
from app.core.metrics import SPEC_VALIDATIONS
from app.schemas.spec import SpecDocument, SpecSummary
from app.services.spec_service import parse_spec, summarize_spec

router = APIRouter()


@router.post("/validate", response_model=SpecSummary)
def validate_spec(request: SpecDocument):
    """Parse a group-role specification and return its normalized summary."""
    try:
        spec = parse_spec(request.document)
    except ParseError as e:
        SPEC_VALIDATIONS.labels(outcome="invalid").inc()
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail={"message": e.message, "line": e.line, "column": e.column},
        )
    except SoisError as e:
        SPEC_VALIDATIONS.labels(outcome="invalid").inc()
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    SPEC_VALIDATIONS.labels(outcome="valid").inc()
    return summarize_spec(spec)
