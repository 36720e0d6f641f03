"""Reader and writer for the AMPL-style `.dat` case format.

Supported statements::

    param <name> := <value> ;
    param <name> := <key>... <value> ... ;
    param : <set> : <col>... := <rows> ;
    param : <col>... := <rows> ;
    set G[<int>] := <ints> ;
    set B := <ints> ;

`#` starts a comment running to the end of the line. Magnitudes at or above
the configured sentinel (1e30) mean "unbounded".
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

from loguru import logger
from pydantic import ValidationError

from shared.config import get_settings
from shared.errors import CaseSemanticError, CaseSyntaxError, MissingReference, UnsupportedFeature
from shared.schemas import Branch, Bus, Generator, Grid

_TOKEN = re.compile(r":=|[;:\[\]]|[^\s;:\[\]]+")
_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_INTEGER = re.compile(r"^[+-]?\d+$")

BUS_COLUMNS = ("busType", "SDR", "SDC", "VL", "VU", "Vm", "Va", "shR", "shC")
BRANCH_COLUMNS = ("status", "SU", "r", "x", "bb", "tau", "nu", "pdLB", "pdUB", "IU")
GENERATOR_COLUMNS = ("SLR", "SLC", "SUR", "SUC")
SCALARS = ("maxParBranches", "Kcard", "baseMVA")

# Number of index keys each indexed parameter takes.
_ARITY: Dict[str, int] = {
    **{name: 1 for name in BUS_COLUMNS},
    **{name: 3 for name in BRANCH_COLUMNS},
    **{name: 2 for name in GENERATOR_COLUMNS},
    "C": 3,
}
_SET_ARITY = {"B": 1, "L0": 3}


@dataclass(frozen=True)
class _Token:
    text: str
    line: int
    column: int


@dataclass
class DatDocument:
    """Raw tables of a `.dat` file before they are resolved into a Grid."""

    scalars: Dict[str, float] = field(default_factory=dict)
    buses: Dict[int, Dict[str, float]] = field(default_factory=dict)
    branches: Dict[Tuple[int, int, int], Dict[str, float]] = field(default_factory=dict)
    generators: Dict[Tuple[int, int], Dict[str, float]] = field(default_factory=dict)
    costs: Dict[Tuple[int, int, int], float] = field(default_factory=dict)
    generator_sets: Dict[int, List[int]] = field(default_factory=dict)


def _tokenize(text: str) -> List[_Token]:
    tokens: List[_Token] = []
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0]
        for match in _TOKEN.finditer(line):
            tokens.append(_Token(match.group(0), line_no, match.start() + 1))
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self._tokens = _tokenize(text)
        self._pos = 0
        self._end = _Token("<end of input>", text.count("\n") + 1, 1)
        self.doc = DatDocument()
        self._sentinel = get_settings().inf_sentinel

    # token helpers

    def _peek(self, offset: int = 0) -> _Token:
        index = self._pos + offset
        return self._tokens[index] if index < len(self._tokens) else self._end

    def _next(self) -> _Token:
        token = self._peek()
        if token is self._end:
            raise CaseSyntaxError("unexpected end of input", token.line, token.column)
        self._pos += 1
        return token

    def _expect(self, text: str) -> _Token:
        token = self._next()
        if token.text != text:
            raise CaseSyntaxError(f"expected '{text}', found '{token.text}'", token.line, token.column)
        return token

    def _until_semicolon(self) -> List[_Token]:
        values: List[_Token] = []
        while True:
            token = self._next()
            if token.text == ";":
                return values
            if token.text in (":=", ":", "[", "]"):
                raise CaseSyntaxError(f"unexpected '{token.text}' in data rows", token.line, token.column)
            values.append(token)

    def _number(self, token: _Token) -> float:
        if not _NUMBER.match(token.text):
            raise CaseSyntaxError(f"expected a number, found '{token.text}'", token.line, token.column)
        value = float(token.text)
        if math.isinf(value) or abs(value) >= self._sentinel:
            return math.copysign(math.inf, value)
        return value

    def _integer(self, token: _Token) -> int:
        if not _INTEGER.match(token.text):
            raise CaseSyntaxError(f"expected an integer, found '{token.text}'", token.line, token.column)
        return int(token.text)

    # statements

    def parse(self) -> DatDocument:
        while self._peek() is not self._end:
            token = self._next()
            if token.text == "param":
                self._parse_param()
            elif token.text == "set":
                self._parse_set()
            else:
                raise CaseSyntaxError(f"expected 'param' or 'set', found '{token.text}'", token.line, token.column)
        return self.doc

    def _parse_set(self) -> None:
        name = self._next()
        if name.text == "G":
            self._expect("[")
            bus = self._integer(self._next())
            self._expect("]")
            self._expect(":=")
            members = [self._integer(t) for t in self._until_semicolon()]
            if bus in self.doc.generator_sets:
                raise CaseSemanticError(f"generator set G[{bus}] declared twice")
            self.doc.generator_sets[bus] = members
        elif name.text == "B":
            self._expect(":=")
            for token in self._until_semicolon():
                self.doc.buses.setdefault(self._integer(token), {})
        else:
            raise CaseSemanticError(f"unknown set '{name.text}' (line {name.line})")

    def _parse_param(self) -> None:
        if self._peek().text == ":":
            self._next()
            self._parse_table()
            return
        name = self._next()
        self._expect(":=")
        values = self._until_semicolon()
        if name.text in SCALARS:
            if len(values) != 1:
                raise CaseSyntaxError(f"scalar '{name.text}' takes one value", name.line, name.column)
            self.doc.scalars[name.text] = self._number(values[0])
            return
        if name.text not in _ARITY:
            raise CaseSemanticError(f"unknown parameter '{name.text}' (line {name.line})")
        self._store_rows((name.text,), values, name)

    def _parse_table(self) -> None:
        header: List[_Token] = []
        declared_set: Optional[str] = None
        while True:
            token = self._next()
            if token.text == ":=":
                break
            if token.text == ":":
                if declared_set is not None or len(header) != 1:
                    raise CaseSyntaxError("malformed table header", token.line, token.column)
                declared_set = header.pop().text
                continue
            if token.text in (";", "[", "]"):
                raise CaseSyntaxError(f"unexpected '{token.text}' in table header", token.line, token.column)
            header.append(token)
        if not header:
            raise CaseSyntaxError("table without columns", self._peek().line, self._peek().column)
        columns = tuple(t.text for t in header)
        for column in header:
            if column.text not in _ARITY or column.text == "C":
                raise CaseSemanticError(f"unknown table column '{column.text}' (line {column.line})")
        arities = {_ARITY[c] for c in columns}
        if len(arities) != 1:
            raise CaseSemanticError(f"table mixes columns of different index sets: {' '.join(columns)}")
        if declared_set is not None and _SET_ARITY.get(declared_set) != arities.pop():
            raise CaseSemanticError(f"set '{declared_set}' does not index columns {' '.join(columns)}")
        self._store_rows(columns, self._until_semicolon(), header[0])

    def _store_rows(self, columns: Tuple[str, ...], values: List[_Token], at: _Token) -> None:
        arity = _ARITY[columns[0]]
        width = arity + len(columns)
        if len(values) % width:
            raise CaseSyntaxError(
                f"row arity mismatch: {len(values)} values do not split into rows of {width}", at.line, at.column
            )
        for start in range(0, len(values), width):
            row = values[start : start + width]
            key = tuple(self._integer(t) for t in row[:arity])
            numbers = [self._number(t) for t in row[arity:]]
            if columns[0] == "C":
                if key in self.doc.costs:
                    raise CaseSemanticError(f"duplicate cost key {key} (line {row[0].line})")
                self.doc.costs[key] = numbers[0]
                continue
            if columns[0] in BUS_COLUMNS:
                label, entry = "bus", self.doc.buses.setdefault(key[0], {})
            elif columns[0] in BRANCH_COLUMNS:
                label, entry = "branch", self.doc.branches.setdefault(key, {})
            else:
                label, entry = "generator", self.doc.generators.setdefault(key, {})
            for column, number in zip(columns, numbers):
                if column in entry:
                    raise CaseSemanticError(f"duplicate {label} key {key} (line {row[0].line})")
                entry[column] = number

def parse_document(text: str) -> DatDocument:
    return _Parser(text).parse()


def parse_dat(text: str) -> Grid:
    """Parse `.dat` text into a Grid, applying the format's defaults."""
    doc = parse_document(text)
    grid = _resolve(doc)
    logger.debug("Parsed .dat case: {}", grid.summary())
    return grid


def _resolve(doc: DatDocument) -> Grid:
    buses: List[Bus] = []
    for bus_id, row in doc.buses.items():
        if "busType" not in row:
            raise CaseSemanticError(f"bus {bus_id} has no busType")
        bus_type = row["busType"]
        if bus_type not in (1.0, 2.0, 3.0):
            raise CaseSemanticError(f"bus {bus_id} has invalid busType {bus_type}")
        buses.append(
            _build(
                Bus,
                id=bus_id,
                bus_type=int(bus_type),
                demand_re=row.get("SDR", 0.0),
                demand_im=row.get("SDC", 0.0),
                v_min=row.get("VL", 0.0),
                v_max=row.get("VU", math.inf),
                vm_hint=row.get("Vm", 1.0),
                va_hint=row.get("Va", 0.0),
                shunt_re=row.get("shR", 0.0),
                shunt_im=row.get("shC", 0.0),
            )
        )
    if not buses:
        raise CaseSemanticError("document declares no buses")
    if not any(b.bus_type == 3 for b in buses):
        raise MissingReference("no bus has busType 3")
    known = set(doc.buses)

    max_parallel = doc.scalars.get("maxParBranches", 1.0)
    branches: List[Branch] = []
    for (b, a, h), row in doc.branches.items():
        if b not in known or a not in known:
            raise CaseSemanticError(f"branch ({b}, {a}, {h}) references an unknown bus")
        if h < 1 or h > max_parallel:
            raise CaseSemanticError(f"branch ({b}, {a}, {h}) exceeds maxParBranches = {max_parallel:g}")
        i_max = row.get("IU")
        branches.append(
            _build(
                Branch,
                from_bus=b,
                to_bus=a,
                parallel_index=h,
                status=row.get("status", 1.0) != 0.0,
                s_max=row.get("SU", math.inf),
                r=row.get("r", 0.0),
                x=row.get("x", 0.0),
                b_ch=row.get("bb", 0.0),
                tau=row.get("tau", 1.0),
                nu=row.get("nu", 0.0),
                eta_min=row.get("pdLB", -math.pi),
                eta_max=row.get("pdUB", math.pi),
                i_max=None if i_max is None or math.isinf(i_max) else i_max,
            )
        )

    raw_kcard = doc.scalars.get("Kcard", 2.0)
    if math.isinf(raw_kcard) or raw_kcard != int(raw_kcard) or raw_kcard < 0:
        raise CaseSemanticError(f"Kcard must be a non-negative integer, found {raw_kcard}")
    kcard = int(raw_kcard)
    declared = {(b, g) for b, members in doc.generator_sets.items() for g in members}
    for b in doc.generator_sets:
        if b not in known:
            raise CaseSemanticError(f"generator set G[{b}] references an unknown bus")
    for key in doc.generators:
        if key not in declared:
            raise CaseSemanticError(f"generator {key} is not declared in any G set")
    for b, g, k in doc.costs:
        if (b, g) not in declared:
            raise CaseSemanticError(f"cost entry ({b}, {g}, {k}) references an undeclared generator")
        if k < 0 or k > kcard:
            raise CaseSemanticError(f"cost entry ({b}, {g}, {k}) exceeds Kcard = {kcard}")
    generators: List[Generator] = []
    for b, members in doc.generator_sets.items():
        for g in members:
            row = doc.generators.get((b, g), {})
            cost = [doc.costs.get((b, g, k), 1.0 if k == 1 else 0.0) if k <= kcard else 0.0 for k in range(3)]
            if any(c != 0.0 for (cb, cg, k), c in doc.costs.items() if (cb, cg) == (b, g) and k > 2):
                raise UnsupportedFeature(f"generator ({b}, {g}) has a cost term above degree 2")
            generators.append(
                _build(
                    Generator,
                    bus=b,
                    index=g,
                    p_min=row.get("SLR", -math.inf),
                    q_min=row.get("SLC", -math.inf),
                    p_max=row.get("SUR", math.inf),
                    q_max=row.get("SUC", math.inf),
                    cost=cost[:3],
                )
            )
    return _build(
        Grid,
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(generators),
        base_mva=doc.scalars.get("baseMVA", 100.0),
    )


def _build(model, **fields):
    try:
        return model(**fields)
    except ValidationError as exc:
        raise CaseSemanticError(f"invalid {model.__name__}: {exc.errors()[0]['msg']}") from exc


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "1e+30" if value > 0 else "-1e+30"
    return format(value, ".17g")


def _rows(lines: Iterator[str]) -> str:
    return "".join(f"  {line}\n" for line in lines)


def write_dat(grid: Grid) -> str:
    """Serialize a Grid so that `parse_dat` reconstructs it field for field."""
    parts: List[str] = ["# ACOPF case written by acopf\n"]
    max_parallel = max((br.parallel_index for br in grid.branches), default=1)
    parts.append(f"param maxParBranches := {max_parallel} ;\n")
    if grid.base_mva != 100.0:
        parts.append(f"param baseMVA := {_fmt(grid.base_mva)} ;\n")

    parts.append("\nparam : B : " + " ".join(BUS_COLUMNS) + " :=\n")
    parts.append(
        _rows(
            " ".join(
                [str(bus.id), str(int(bus.bus_type))]
                + [
                    _fmt(v)
                    for v in (bus.demand_re, bus.demand_im, bus.v_min, bus.v_max, bus.vm_hint, bus.va_hint, bus.shunt_re, bus.shunt_im)
                ]
            )
            for bus in grid.buses
        )
    )
    parts.append(";\n")

    if grid.generators:
        parts.append("\n")
        for bus_id in dict.fromkeys(gen.bus for gen in grid.generators):
            members = " ".join(str(gen.index) for gen in grid.generators_at(bus_id))
            parts.append(f"set G[{bus_id}] := {members} ;\n")
        parts.append("\nparam : " + " ".join(GENERATOR_COLUMNS) + " :=\n")
        parts.append(
            _rows(
                f"{gen.bus} {gen.index} " + " ".join(_fmt(v) for v in (gen.p_min, gen.q_min, gen.p_max, gen.q_max))
                for gen in grid.generators
            )
        )
        parts.append(";\n")

    if grid.branches:
        with_current = any(br.i_max is not None for br in grid.branches)
        columns = BRANCH_COLUMNS if with_current else BRANCH_COLUMNS[:-1]
        parts.append("\nparam : L0 : " + " ".join(columns) + " :=\n")

        def branch_row(br: Branch) -> str:
            values = [br.s_max, br.r, br.x, br.b_ch, br.tau, br.nu, br.eta_min, br.eta_max]
            if with_current:
                values.append(math.inf if br.i_max is None else br.i_max)
            return f"{br.from_bus} {br.to_bus} {br.parallel_index} {int(br.status)} " + " ".join(_fmt(v) for v in values)

        parts.append(_rows(branch_row(br) for br in grid.branches))
        parts.append(";\n")

    if grid.generators:
        parts.append("\nparam Kcard := 2 ;\n")
        parts.append("param C :=\n")
        parts.append(
            _rows(
                f"{gen.bus} {gen.index} {k} {_fmt(gen.cost[k])}"
                for gen in grid.generators
                for k in range(3)
            )
        )
        parts.append(";\n")
    return "".join(parts)
