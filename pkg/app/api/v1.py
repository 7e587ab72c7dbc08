"""API v1 router registration."""

from fastapi import APIRouter

from app.api.routers import contexts, scenarios, specs

api_router = APIRouter()

api_router.include_router(specs.router, prefix="/specs", tags=["specs"])
api_router.include_router(contexts.router, prefix="/contexts", tags=["contexts"])
api_router.include_router(scenarios.router, prefix="/scenarios", tags=["scenarios"])
