"""Loss-free JSON form of a Formulation.

Polynomials are stored as lists of (monomial, coefficient) pairs over
variable positions, so a document reparses into an equal Formulation.
Infinite bounds become null.
"""

from __future__ import annotations

import json
import math
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field

from ..formulation import (
    Formulation,
    MatrixSense,
    PolyConstraint,
    Polynomial,
    PsdBlock,
    Sense,
    SocConstraint,
    TrigLink,
    Variable,
)

SCHEMA_VERSION = 1

Terms = List[Tuple[List[int], float]]
Key = List[Union[int, str]]


class JsonVariable(BaseModel):
    name: str
    lower: Optional[float] = None
    upper: Optional[float] = None
    tag: str


class JsonPoly(BaseModel):
    kind: Literal["poly"] = "poly"
    tag: str
    key: Key
    sense: Sense
    rhs: float
    terms: Terms


class JsonCone(BaseModel):
    kind: Literal["soc"] = "soc"
    tag: str
    key: Key
    members: List[Terms]
    t: Terms
    w: Optional[Terms] = None


class JsonPsd(BaseModel):
    kind: Literal["psd"] = "psd"
    tag: str
    key: Key
    dim: int
    sense: MatrixSense
    entries: List[Tuple[int, int, Terms]]


class JsonMetadata(BaseModel):
    formulation: str
    grid_hash: str


class JsonModel(BaseModel):
    schema_version: int = SCHEMA_VERSION
    metadata: JsonMetadata
    variables: List[JsonVariable] = Field(default_factory=list)
    objective: Terms = Field(default_factory=list)
    constraints: List[JsonPoly] = Field(default_factory=list)
    cones: List[JsonCone] = Field(default_factory=list)
    psd_blocks: List[JsonPsd] = Field(default_factory=list)
    trig_links: List[Tuple[int, int, int, int]] = Field(default_factory=list)


def _terms(poly: Polynomial) -> Terms:
    return [(list(monomial), coef) for monomial, coef in poly]


def _poly(terms: Terms) -> Polynomial:
    return Polynomial((tuple(monomial), coef) for monomial, coef in terms)


def _bound(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def to_json_model(f: Formulation) -> JsonModel:
    return JsonModel(
        metadata=JsonMetadata(formulation=f.kind, grid_hash=f.grid_hash),
        variables=[JsonVariable(name=v.name, lower=_bound(v.lower), upper=_bound(v.upper), tag=v.tag) for v in f.variables],
        objective=_terms(f.objective),
        constraints=[
            JsonPoly(tag=c.tag, key=list(c.key), sense=c.sense, rhs=c.rhs, terms=_terms(c.poly)) for c in f.constraints
        ],
        cones=[
            JsonCone(
                tag=c.tag,
                key=list(c.key),
                members=[_terms(m) for m in c.members],
                t=_terms(c.t),
                w=None if c.w is None else _terms(c.w),
            )
            for c in f.cones
        ],
        psd_blocks=[
            JsonPsd(tag=b.tag, key=list(b.key), dim=b.dim, sense=b.sense, entries=[(i, j, _terms(e)) for i, j, e in b.entries])
            for b in f.psd_blocks
        ],
        trig_links=[(t.cos_var, t.sin_var, t.theta_from, t.theta_to) for t in f.trig_links],
    )


def from_json_model(model: JsonModel) -> Formulation:
    if model.schema_version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {model.schema_version}")
    return Formulation(
        kind=model.metadata.formulation,
        grid_hash=model.metadata.grid_hash,
        variables=tuple(
            Variable(
                v.name,
                -math.inf if v.lower is None else v.lower,
                math.inf if v.upper is None else v.upper,
                v.tag,
            )
            for v in model.variables
        ),
        objective=_poly(model.objective),
        constraints=tuple(PolyConstraint(c.tag, tuple(c.key), _poly(c.terms), c.sense, c.rhs) for c in model.constraints),
        cones=tuple(
            SocConstraint(
                c.tag,
                tuple(c.key),
                tuple(_poly(m) for m in c.members),
                _poly(c.t),
                None if c.w is None else _poly(c.w),
            )
            for c in model.cones
        ),
        psd_blocks=tuple(
            PsdBlock(b.tag, tuple(b.key), b.dim, tuple((i, j, _poly(e)) for i, j, e in b.entries), b.sense)
            for b in model.psd_blocks
        ),
        trig_links=tuple(TrigLink(*link) for link in model.trig_links),
    )


def export_json(f: Formulation) -> str:
    payload = to_json_model(f).model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def import_json(text: str) -> Formulation:
    return from_json_model(JsonModel.model_validate_json(text))
