"""Context evaluation service: restrictive criteria, fitness and group membership."""

import fnmatch
import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

from app.config import settings
from app.logger import get_logger
from app.schemas.context import ContextReport, FitnessScore, NodeContext, RoleVerdict
from app.schemas.spec import Criterion, GroupSpec, ValueType
from app.services.spec_service import effective_criteria

logger = get_logger(__name__)

PATTERN_MATCHERS = ("substring", "glob", "regex")
DEFAULT_TERM_MAXIMUM = 100.0


@lru_cache(maxsize=256)
def _compiled(pattern: str) -> re.Pattern:
    return re.compile(pattern, re.IGNORECASE)


def match_pattern(pattern: str, value: str, matcher: Optional[str] = None) -> bool:
    """Match a string fact against a criterion pattern."""
    matcher = matcher or settings.PATTERN_MATCHER
    if matcher == "substring":
        return pattern.lower() in value.lower()
    if matcher == "glob":
        return fnmatch.fnmatch(value.lower(), pattern.lower())
    if matcher == "regex":
        try:
            return _compiled(pattern).search(value) is not None
        except re.error:
            logger.warning(f"Invalid regex pattern '{pattern}', treating as no match")
            return False
    raise ValueError(f"Unknown pattern matcher '{matcher}', expected one of {PATTERN_MATCHERS}")


def eval_criterion(ctx: NodeContext, c: Criterion, matcher: Optional[str] = None) -> bool:
    """Evaluate one restrictive criterion; missing facts evaluate to false."""
    if c.value_type is ValueType.BOOLEAN:
        if c.term not in ctx.booleans or ctx.booleans[c.term] != c.required_value:
            return False
        if c.after_seconds is None:
            return True
        # Temporal criteria only make sense for a fact that currently holds.
        if not ctx.booleans[c.term]:
            return False
        since = ctx.boolean_since.get(c.term)
        return since is not None and ctx.now - since >= c.after_seconds

    if c.value_type is ValueType.FLOAT:
        value = ctx.scalars.get(c.term)
        return value is not None and value >= c.minimum

    value = ctx.strings.get(c.term)
    return value is not None and match_pattern(c.pattern, value, matcher)


def rrc(ctx: NodeContext, effective: List[Criterion], matcher: Optional[str] = None) -> bool:
    """Role restrictive criteria: conjunction over every effective criterion."""
    return all(eval_criterion(ctx, c, matcher) for c in effective)


def fitness(
    ctx: NodeContext,
    effective: List[Criterion],
    maxima: Optional[Mapping[str, float]] = None,
) -> FitnessScore:
    """Product of the comparative terms, each normalized to [0, 1]."""
    value = 1.0
    for c in effective:
        if not c.comparative:
            continue
        raw = ctx.scalars.get(c.term, 0.0)
        maximum = (maxima or {}).get(c.term, DEFAULT_TERM_MAXIMUM)
        value *= min(1.0, max(0.0, raw / maximum))
    return FitnessScore(value=value, measured_at=ctx.now)


def group_membership(ctx: NodeContext, spec: GroupSpec, matcher: Optional[str] = None) -> bool:
    """True iff the context satisfies the RRC of at least one role."""
    return any(rrc(ctx, effective_criteria(spec, role.name), matcher) for role in spec.roles)


def evaluate_context(spec: GroupSpec, ctx: NodeContext) -> ContextReport:
    """Per-role rrc/fitness verdicts plus the group membership verdict."""
    verdicts = []
    for role in spec.roles:
        effective = effective_criteria(spec, role.name)
        satisfied = rrc(ctx, effective)
        verdicts.append(
            RoleVerdict(
                role=role.name,
                rrc=satisfied,
                fitness=fitness(ctx, effective).value if satisfied else None,
            )
        )
    return ContextReport(
        node_id=ctx.node_id,
        group=spec.name,
        roles=verdicts,
        group_membership=any(v.rrc for v in verdicts),
    )


def load_context(path: str | Path) -> NodeContext:
    """Read a context snapshot file (JSON)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return NodeContext.model_validate(data)


@dataclass
class _Facts:
    booleans: Dict[str, bool] = field(default_factory=dict)
    scalars: Dict[str, float] = field(default_factory=dict)
    strings: Dict[str, str] = field(default_factory=dict)
    since: Dict[str, float] = field(default_factory=dict)
    version: int = 0


class ContextStore:
    """Mutable per-node context facts, snapshotted as NodeContext on demand."""

    def __init__(self) -> None:
        self._facts: Dict[str, _Facts] = {}
        self._cache: Dict[str, Tuple[int, float, NodeContext]] = {}

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._facts

    def register(
        self,
        node_id: str,
        booleans: Optional[Mapping[str, bool]] = None,
        scalars: Optional[Mapping[str, float]] = None,
        strings: Optional[Mapping[str, str]] = None,
        now: float = 0.0,
    ) -> None:
        self._facts[node_id] = _Facts()
        self.apply(node_id, booleans, scalars, strings, now)

    def apply(
        self,
        node_id: str,
        booleans: Optional[Mapping[str, bool]] = None,
        scalars: Optional[Mapping[str, float]] = None,
        strings: Optional[Mapping[str, str]] = None,
        now: float = 0.0,
    ) -> None:
        """Apply a context change; boolean_since tracks false-to-true flips."""
        facts = self._facts[node_id]
        for term, value in (booleans or {}).items():
            if value and not facts.booleans.get(term, False):
                facts.since[term] = now
            elif not value:
                facts.since.pop(term, None)
            facts.booleans[term] = bool(value)
        for term, value in (scalars or {}).items():
            facts.scalars[term] = float(value)
        facts.strings.update(strings or {})
        facts.version += 1

    def scalar(self, node_id: str, term: str, default: float = 0.0) -> float:
        return self._facts[node_id].scalars.get(term, default)

    def snapshot(self, node_id: str, now: float) -> NodeContext:
        """Immutable view of a node's facts at simulated time now."""
        facts = self._facts[node_id]
        cached = self._cache.get(node_id)
        if cached and cached[0] == facts.version and cached[1] == now:
            return cached[2]
        # Facts were validated when the scenario was loaded.
        ctx = NodeContext.model_construct(
            node_id=node_id,
            booleans=dict(facts.booleans),
            scalars=dict(facts.scalars),
            strings=dict(facts.strings),
            boolean_since=dict(facts.since),
            now=now,
        )
        self._cache[node_id] = (facts.version, now, ctx)
        return ctx

    def snapshots(self, node_ids, now: float) -> Dict[str, NodeContext]:
        return {n: self.snapshot(n, now) for n in node_ids if n in self._facts}
