"""Group-role specification schemas."""

from __future__ import annotations

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ValueType(str, Enum):
    """Semantic type of a criterion term."""

    BOOLEAN = "boolean"
    FLOAT = "float"
    STRING = "string"


class Criterion(BaseModel):
    """A single restrictive (and possibly comparative) context criterion."""

    model_config = ConfigDict(frozen=True)

    term: str = Field(..., min_length=1)
    value_type: ValueType
    required_value: Optional[bool] = None
    minimum: Optional[float] = None
    pattern: Optional[str] = None
    after_seconds: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def check_combination(self) -> Criterion:
        """Only boolean+value[+after], float+minimum and string+pattern are legal."""
        if self.value_type is ValueType.BOOLEAN:
            ok = (
                self.required_value is not None
                and self.minimum is None
                and self.pattern is None
            )
        elif self.value_type is ValueType.FLOAT:
            ok = (
                self.minimum is not None
                and self.required_value is None
                and self.pattern is None
                and self.after_seconds is None
            )
        else:
            ok = (
                self.pattern is not None
                and self.required_value is None
                and self.minimum is None
                and self.after_seconds is None
            )
        if not ok:
            raise ValueError(f"illegal attribute combination for {self.value_type.value} criterion")
        return self

    @property
    def comparative(self) -> bool:
        """Float criteria with a minimum double as fitness terms."""
        return self.value_type is ValueType.FLOAT and self.minimum is not None


class CardinalitySpec(BaseModel):
    """Fixed(k) or Parameter(name, current)."""

    model_config = ConfigDict(frozen=True)

    fixed: Optional[int] = Field(None, ge=1)
    parameter: Optional[str] = None
    current: Optional[int] = None

    @model_validator(mode="after")
    def check_kind(self) -> CardinalitySpec:
        if (self.fixed is None) == (self.parameter is None):
            raise ValueError("cardinality is either a fixed integer or a named parameter")
        if self.fixed is not None and self.current is not None:
            raise ValueError("fixed cardinality cannot be re-bound")
        return self

    @property
    def is_parameter(self) -> bool:
        return self.parameter is not None

    @property
    def is_bound(self) -> bool:
        return self.fixed is not None or self.current is not None

    @property
    def value(self) -> Optional[int]:
        """Number of positions, or None while a parameter is unbound."""
        return self.fixed if self.fixed is not None else self.current

    def label(self) -> str:
        return str(self.fixed) if self.fixed is not None else str(self.parameter)


class RoleSpec(BaseModel):
    """Role declared within a group."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1)
    cardinality: CardinalitySpec
    criteria: List[Criterion] = Field(default_factory=list)


class GroupSpec(BaseModel):
    """Parsed organizational specification of one group."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1)
    group_criteria: List[Criterion] = Field(default_factory=list)
    roles: List[RoleSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_unique_roles(self) -> GroupSpec:
        seen = set()
        for role in self.roles:
            if role.name in seen:
                raise ValueError(f"duplicate role name '{role.name}'")
            seen.add(role.name)
        return self

    def role(self, name: str) -> Optional[RoleSpec]:
        """Look up a role by name."""
        for role in self.roles:
            if role.name == name:
                return role
        return None

    @property
    def role_names(self) -> List[str]:
        return [role.name for role in self.roles]

    @property
    def parameters(self) -> List[str]:
        """Cardinality parameter names in document order."""
        return [r.cardinality.parameter for r in self.roles if r.cardinality.parameter]


class CriterionSummary(BaseModel):
    """Flat, printable view of a criterion."""

    term: str
    type: str
    value: Optional[bool] = None
    minimum: Optional[float] = None
    pattern: Optional[str] = None
    after: Optional[int] = None
    comparative: bool


class RoleSummary(BaseModel):
    """Role with its effective criteria."""

    name: str
    cardinality: str
    effective_criteria: List[CriterionSummary]


class SpecSummary(BaseModel):
    """Normalized summary of a validated specification."""

    group: str
    group_criteria: List[CriterionSummary]
    roles: List[RoleSummary]
    parameters: List[str]


class SpecDocument(BaseModel):
    """XML specification text submitted for validation."""

    document: str = Field(..., min_length=1)
