"""Group-role specification service: XML parsing, inheritance and binding."""

import re
from pathlib import Path
from typing import Dict, List, Mapping, Optional

from lxml import etree
from pydantic import ValidationError

from app.core.errors import MissingBinding, NonPositiveBinding, ParseError, UnknownRole
from app.logger import get_logger
from app.schemas.spec import (
    CardinalitySpec,
    Criterion,
    CriterionSummary,
    GroupSpec,
    RoleSpec,
    RoleSummary,
    SpecSummary,
    ValueType,
)

logger = get_logger(__name__)

SPECS_DIR = Path(__file__).resolve().parent.parent / "specs"

GROUP_ATTRIBUTES = {"name"}
ROLE_ATTRIBUTES = {"name", "cardinality"}
CRITERION_ATTRIBUTES = {"type", "term", "value", "minimum", "pattern", "after"}

_IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")
_INTEGER = re.compile(r"^[+-]?\d+$")


def _xml_parser() -> etree.XMLParser:
    # A fresh parser per call keeps parse_spec safe to call from several threads.
    return etree.XMLParser(
        remove_comments=True,
        remove_pis=True,
        resolve_entities=False,
        no_network=True,
    )


def parse_spec(document: str) -> GroupSpec:
    """Parse an XML group-role specification into a GroupSpec."""
    try:
        root = etree.fromstring(document.encode("utf-8"), parser=_xml_parser())
    except etree.XMLSyntaxError as e:
        line, column = e.position if e.position else (e.lineno, None)
        raise ParseError(f"malformed XML: {e.msg}", line, column)

    if root.tag != "group":
        raise ParseError(f"unknown element <{root.tag}>, expected <group>", root.sourceline)
    _check_attributes(root, GROUP_ATTRIBUTES)
    name = (root.get("name") or "").strip()
    if not name:
        raise ParseError("group name must be non-empty", root.sourceline)

    group_criteria: List[Criterion] = []
    roles: List[RoleSpec] = []
    seen_terms: Dict[str, int] = {}
    seen_roles: Dict[str, int] = {}

    for child in root:
        if child.tag == "criteria":
            criterion = _parse_criterion(child)
            _check_duplicate_term(criterion, child, seen_terms)
            group_criteria.append(criterion)
        elif child.tag == "role":
            role = _parse_role(child)
            if role.name in seen_roles:
                raise ParseError(
                    f"duplicate role name '{role.name}' (first declared on line "
                    f"{seen_roles[role.name]})",
                    child.sourceline,
                )
            seen_roles[role.name] = child.sourceline
            roles.append(role)
        else:
            raise ParseError(f"unknown element <{child.tag}> in <group>", child.sourceline)

    try:
        return GroupSpec(name=name, group_criteria=group_criteria, roles=roles)
    except ValidationError as e:
        raise ParseError(str(e.errors()[0]["msg"]), root.sourceline)


def _check_attributes(element, allowed: set) -> None:
    for attribute in element.attrib:
        if attribute not in allowed:
            raise ParseError(
                f"unknown attribute '{attribute}' on <{element.tag}>", element.sourceline
            )


def _check_duplicate_term(criterion: Criterion, element, seen: Dict[str, int]) -> None:
    if criterion.term in seen:
        raise ParseError(
            f"duplicate term '{criterion.term}' in the same criteria scope "
            f"(first declared on line {seen[criterion.term]})",
            element.sourceline,
        )
    seen[criterion.term] = element.sourceline


def _parse_role(element) -> RoleSpec:
    _check_attributes(element, ROLE_ATTRIBUTES)
    name = (element.get("name") or "").strip()
    if not name:
        raise ParseError("role name must be non-empty", element.sourceline)
    raw_cardinality = element.get("cardinality")
    if raw_cardinality is None:
        raise ParseError(f"role '{name}' has no cardinality", element.sourceline)
    cardinality = _parse_cardinality(raw_cardinality.strip(), element.sourceline)

    criteria: List[Criterion] = []
    seen_terms: Dict[str, int] = {}
    for child in element:
        if child.tag != "criteria":
            raise ParseError(f"unknown element <{child.tag}> in <role>", child.sourceline)
        criterion = _parse_criterion(child)
        _check_duplicate_term(criterion, child, seen_terms)
        criteria.append(criterion)
    return RoleSpec(name=name, cardinality=cardinality, criteria=criteria)


def _parse_cardinality(raw: str, line: int) -> CardinalitySpec:
    if _INTEGER.match(raw):
        k = int(raw)
        if k < 1:
            raise ParseError(f"non-positive fixed cardinality {k}", line)
        return CardinalitySpec(fixed=k)
    if _IDENTIFIER.match(raw):
        return CardinalitySpec(parameter=raw)
    raise ParseError(f"invalid cardinality '{raw}'", line)


def _parse_criterion(element) -> Criterion:
    line = element.sourceline
    _check_attributes(element, CRITERION_ATTRIBUTES)
    if len(element):
        raise ParseError("<criteria> takes no child elements", line)

    raw_type = element.get("type")
    term = (element.get("term") or "").strip()
    if raw_type is None or not term:
        raise ParseError("<criteria> requires 'type' and 'term'", line)
    try:
        value_type = ValueType(raw_type.strip().lower())
    except ValueError:
        raise ParseError(f"unknown criterion type '{raw_type}'", line)

    present = {a for a in ("value", "minimum", "pattern", "after") if element.get(a) is not None}
    legal = {
        ValueType.BOOLEAN: ({"value"}, {"value", "after"}),
        ValueType.FLOAT: ({"minimum"},),
        ValueType.STRING: ({"pattern"},),
    }[value_type]
    if present not in [set(combo) for combo in legal]:
        raise ParseError(
            f"illegal attribute combination for {value_type.value} criterion "
            f"'{term}': {sorted(present)}",
            line,
        )

    fields = {"term": term, "value_type": value_type}
    if "value" in present:
        fields["required_value"] = _parse_bool(element.get("value"), line)
    if "minimum" in present:
        try:
            fields["minimum"] = float(element.get("minimum"))
        except ValueError:
            raise ParseError(f"minimum of '{term}' is not a number", line)
    if "pattern" in present:
        fields["pattern"] = element.get("pattern")
    if "after" in present:
        raw_after = element.get("after").strip()
        if not raw_after.isdigit():
            raise ParseError(f"after of '{term}' must be a non-negative integer", line)
        fields["after_seconds"] = int(raw_after)
    return Criterion(**fields)


def _parse_bool(raw: str, line: int) -> bool:
    lowered = raw.strip().lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    raise ParseError(f"boolean value must be TRUE or FALSE, got '{raw}'", line)


def _format_number(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def _criterion_element(criterion: Criterion) -> etree._Element:
    element = etree.Element("criteria")
    element.set("type", criterion.value_type.value)
    element.set("term", criterion.term)
    if criterion.required_value is not None:
        element.set("value", "TRUE" if criterion.required_value else "FALSE")
    if criterion.minimum is not None:
        element.set("minimum", _format_number(criterion.minimum))
    if criterion.pattern is not None:
        element.set("pattern", criterion.pattern)
    if criterion.after_seconds is not None:
        element.set("after", str(criterion.after_seconds))
    return element


def serialize_spec(spec: GroupSpec) -> str:
    """Render a GroupSpec back to the XML schema parse_spec accepts."""
    root = etree.Element("group")
    root.set("name", spec.name)
    for criterion in spec.group_criteria:
        root.append(_criterion_element(criterion))
    for role in spec.roles:
        element = etree.SubElement(root, "role")
        element.set("name", role.name)
        element.set("cardinality", role.cardinality.label())
        for criterion in role.criteria:
            element.append(_criterion_element(criterion))
    return etree.tostring(root, pretty_print=True, encoding="unicode")


def effective_criteria(spec: GroupSpec, role: str) -> List[Criterion]:
    """Group criteria overridden term-wise by the role's own criteria."""
    role_spec = spec.role(role)
    if role_spec is None:
        raise UnknownRole(f"role '{role}' is not declared in group '{spec.name}'")

    local = {c.term: c for c in role_spec.criteria}
    merged = [local.get(c.term, c) for c in spec.group_criteria]
    inherited_terms = {c.term for c in spec.group_criteria}
    merged.extend(c for c in role_spec.criteria if c.term not in inherited_terms)
    return merged


def bind_cardinality(spec: GroupSpec, bindings: Mapping[str, int]) -> GroupSpec:
    """Return a copy of spec with every parametrized cardinality bound."""
    roles: List[RoleSpec] = []
    for role in spec.roles:
        cardinality = role.cardinality
        if cardinality.is_parameter:
            if cardinality.parameter not in bindings:
                raise MissingBinding(cardinality.parameter)
            value = int(bindings[cardinality.parameter])
            if value < 1:
                raise NonPositiveBinding(cardinality.parameter, value)
            role = role.model_copy(
                update={"cardinality": cardinality.model_copy(update={"current": value})}
            )
        roles.append(role)
    return spec.model_copy(update={"roles": roles})


def require_bound(spec: GroupSpec) -> None:
    """Raise MissingBinding for the first unbound parameter."""
    for role in spec.roles:
        if not role.cardinality.is_bound:
            raise MissingBinding(role.cardinality.parameter)


def current_bindings(spec: GroupSpec) -> Dict[str, int]:
    """Current values of bound cardinality parameters."""
    return {
        r.cardinality.parameter: r.cardinality.current
        for r in spec.roles
        if r.cardinality.is_parameter and r.cardinality.current is not None
    }


def position_count(spec: GroupSpec, role: str) -> int:
    """Number of positions of a role (0 while unbound)."""
    role_spec = spec.role(role)
    if role_spec is None:
        raise UnknownRole(f"role '{role}' is not declared in group '{spec.name}'")
    return role_spec.cardinality.value or 0


def load_spec(path: str | Path) -> GroupSpec:
    """Read and parse a specification file (UTF-8)."""
    text = Path(path).read_text(encoding="utf-8")
    spec = parse_spec(text)
    logger.debug(f"Loaded spec '{spec.name}' from {path} with {len(spec.roles)} roles")
    return spec


def bundled_spec(name: str) -> GroupSpec:
    """Load one of the specifications shipped in app/specs."""
    return load_spec(SPECS_DIR / f"{name}.xml")


def summarize_criterion(criterion: Criterion) -> CriterionSummary:
    return CriterionSummary(
        term=criterion.term,
        type=criterion.value_type.value,
        value=criterion.required_value,
        minimum=criterion.minimum,
        pattern=criterion.pattern,
        after=criterion.after_seconds,
        comparative=criterion.comparative,
    )


def summarize_spec(spec: GroupSpec) -> SpecSummary:
    """Build the normalized summary printed by `soisim validate`."""
    return SpecSummary(
        group=spec.name,
        group_criteria=[summarize_criterion(c) for c in spec.group_criteria],
        roles=[
            RoleSummary(
                name=role.name,
                cardinality=role.cardinality.label(),
                effective_criteria=[
                    summarize_criterion(c) for c in effective_criteria(spec, role.name)
                ],
            )
            for role in spec.roles
        ],
        parameters=spec.parameters,
    )


def find_role_with_term(spec: GroupSpec, term: str) -> Optional[str]:
    """First role whose effective criteria mention term."""
    for role in spec.roles:
        if any(c.term == term for c in effective_criteria(spec, role.name)):
            return role.name
    return None
