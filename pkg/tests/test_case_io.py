import math
import re

import numpy as np
import pytest

from acopf.case_io import load_case, parse_case_text, parse_dat, parse_matpower, write_dat
from shared.errors import AcopfError, CaseSemanticError, CaseSyntaxError, MissingReference, UnsupportedFeature
from shared.schemas import Grid

MINIMAL = """
param : B : busType SDR SDC VL VU :=
  1 3 0.0 0.0 0.9 1.1
  2 1 0.5 0.1 0.9 1.1 ;
set G[1] := 1 ;
param : L0 : r x :=
  1 2 1 0.01 0.1 ;
"""


def test_case5_structure(case5):
    assert case5.summary() == "5 buses, 6 lines, 5 generators, reference bus 4"
    assert [(g.bus, g.index) for g in case5.generators] == [(1, 1), (1, 2), (3, 1), (4, 1), (5, 1)]
    assert case5.bus(4).demand == pytest.approx(4.0 + 1.3147j)
    limited = {br.key: br.s_max for br in case5.branches if math.isfinite(br.s_max)}
    assert limited == {(1, 2, 1): 4.0, (4, 5, 1): 2.4}
    assert case5.generators[0].cost == (0.0, 1400.0, 0.0)


def test_defaults_fill_missing_columns():
    grid = parse_dat(MINIMAL)
    branch = grid.branches[0]

    assert branch.tau == 1.0
    assert branch.s_max == math.inf
    assert branch.eta_min == -math.pi
    assert grid.generators[0].cost == (0.0, 1.0, 0.0)
    assert grid.generators[0].p_max == math.inf


def test_sentinel_means_unbounded(case5):
    branch = next(br for br in case5.branches if br.key == (1, 4, 1))
    assert branch.s_max == math.inf


def test_duplicate_branch_row_rejected(case5_text):
    row = "  1 2 1   1 4.0 0.00281 0.0281 0.00712 1.0 0.0 -1.57079632679 1.57079632679\n"
    text = case5_text.replace(row, row + row)

    with pytest.raises(CaseSemanticError, match="duplicate branch key"):
        parse_dat(text)


def test_syntax_error_reports_position():
    with pytest.raises(CaseSyntaxError) as info:
        parse_dat("param : B : busType :=\n  1 three ;\n")
    assert info.value.line == 2
    assert info.value.column == 5


def test_row_arity_mismatch():
    with pytest.raises(CaseSyntaxError, match="arity"):
        parse_dat("param : B : busType VL :=\n  1 3 0.9 2 ;\n")


def test_missing_reference():
    with pytest.raises(MissingReference):
        parse_dat("param : B : busType :=\n  1 1\n  2 1 ;\n")


def test_undeclared_generator_rejected():
    with pytest.raises(CaseSemanticError, match="not declared"):
        parse_dat(MINIMAL + "param : SLR SUR :=\n  2 1 0.0 1.0 ;\n")


def test_cost_above_kcard_rejected():
    with pytest.raises(CaseSemanticError, match="Kcard"):
        parse_dat(MINIMAL + "param Kcard := 1 ;\nparam C :=\n  1 1 2 3.0 ;\n")


def test_parallel_index_above_limit():
    text = MINIMAL.replace("1 2 1 0.01 0.1", "1 2 2 0.01 0.1")
    with pytest.raises(CaseSemanticError, match="maxParBranches"):
        parse_dat(text)


def test_write_dat_round_trip(case5, three_bus):
    assert parse_dat(write_dat(case5)) == case5
    assert parse_dat(write_dat(three_bus)) == three_bus


def test_current_limit_column_round_trips():
    grid = parse_dat(MINIMAL.replace("param : L0 : r x :=\n  1 2 1 0.01 0.1 ;", "param : L0 : r x IU :=\n  1 2 1 0.01 0.1 2.5 ;"))

    assert grid.branches[0].i_max == 2.5
    assert parse_dat(write_dat(grid)) == grid


def test_matpower_agrees_with_dat(case5, case5_m_path):
    other = load_case(case5_m_path)

    assert len(other.buses) == len(case5.buses)
    assert len(other.branches) == len(case5.branches)
    assert len(other.generators) == len(case5.generators)
    for a, b in zip(case5.buses, other.buses):
        for field in ("id", "bus_type", "demand_re", "demand_im", "v_min", "v_max", "shunt_re", "shunt_im"):
            assert getattr(a, field) == pytest.approx(getattr(b, field), abs=1e-12)
    for a, b in zip(case5.branches, other.branches):
        assert a.key == b.key
        for field in ("r", "x", "b_ch", "tau", "nu", "s_max"):
            assert getattr(a, field) == pytest.approx(getattr(b, field), abs=1e-12)
        # the .dat listing rounds ±π/2 to eleven decimals
        assert a.eta_min == pytest.approx(b.eta_min, abs=1e-9)
        assert a.eta_max == pytest.approx(b.eta_max, abs=1e-9)
    for a, b in zip(case5.generators, other.generators):
        assert (a.bus, a.index) == (b.bus, b.index)
        for field in ("p_min", "p_max", "q_min", "q_max"):
            assert getattr(a, field) == pytest.approx(getattr(b, field), abs=1e-12)
        assert a.cost == pytest.approx(b.cost)


def test_matpower_rejects_non_numeric_literal(case5_m_path):
    text = case5_m_path.read_text(encoding="utf-8").replace("0.00281", "r12", 1)

    with pytest.raises(CaseSyntaxError, match="numeric literal"):
        parse_matpower(text)


def test_matpower_piecewise_cost_unsupported(case5_m_path):
    text = case5_m_path.read_text(encoding="utf-8").replace("\t2\t0\t0\t2\t14\t0;", "\t1\t0\t0\t2\t14\t0;")

    with pytest.raises(UnsupportedFeature):
        parse_matpower(text)


def test_unknown_extension():
    with pytest.raises(UnsupportedFeature):
        parse_case_text("", ".raw")


@pytest.mark.parametrize(
    "old, new",
    [
        ("\n\t1\t2\t0\t0\t0", "\n\t1e400\t2\t0\t0\t0"),
        ("\n\t2\t1\t300", "\n\t1.7\t1\t300"),
        ("\n\t3\t2\t300", "\n\t3\t2.5\t300"),
        ("\n\t1\t40\t", "\n\t1.5\t40\t"),
    ],
)
def test_matpower_rejects_non_integral_ids(case5_m_path, old, new):
    text = case5_m_path.read_text(encoding="utf-8")
    assert old in text

    with pytest.raises(CaseSemanticError, match="integer"):
        parse_matpower(text.replace(old, new, 1))


def _with_gencost(text: str, row: str) -> str:
    block = "mpc.gencost = [\n" + "".join(f"\t{row};\n" for _ in range(5)) + "];"
    return re.sub(r"mpc\.gencost = \[.*?\];", block, text, flags=re.S)


@pytest.mark.parametrize(
    "row, error",
    [
        ("2\t0\t0", CaseSyntaxError),
        ("2\t0\t0\t1e400\t1", CaseSemanticError),
        ("2\t0\t0\t-1\t1", CaseSemanticError),
        ("2\t0\t0\t1.5\t1", CaseSemanticError),
        ("2\t0\t0\t5\t1", CaseSyntaxError),
        ("1e400\t0\t0\t1\t1", CaseSemanticError),
    ],
)
def test_matpower_malformed_gencost(case5_m_path, row, error):
    text = _with_gencost(case5_m_path.read_text(encoding="utf-8"), row)

    with pytest.raises(error):
        parse_matpower(text)


def test_matpower_constant_cost(case5_m_path):
    grid = parse_matpower(_with_gencost(case5_m_path.read_text(encoding="utf-8"), "2\t0\t0\t1\t7"))

    assert all(g.cost == (7.0, 0.0, 0.0) for g in grid.generators)


_PIECES = ("0", "1", "-", ".", "e", ";", ":", ":=", "[", "]", " ", "\n", "\t", "1e400", "1.7", "nan", "#", "%", "x")


def _mutate(text: str, rng: np.random.Generator) -> str:
    for _ in range(int(rng.integers(1, 4))):
        at = int(rng.integers(0, len(text)))
        action = int(rng.integers(0, 3))
        piece = _PIECES[int(rng.integers(0, len(_PIECES)))]
        if action == 0:
            text = text[:at] + text[at + 1 :]
        elif action == 1:
            text = text[:at] + piece + text[at:]
        else:
            text = text[:at] + piece + text[at + 1 :]
    return text


@pytest.mark.parametrize("parser, fixture", [(parse_dat, "case5_text"), (parse_matpower, "case5_m_path")])
def test_mutated_cases_fail_cleanly(parser, fixture, request):
    source = request.getfixturevalue(fixture)
    text = source if isinstance(source, str) else source.read_text(encoding="utf-8")
    rng = np.random.default_rng(7)

    for _ in range(300):
        mutated = _mutate(text, rng)
        try:
            result = parser(mutated)
        except AcopfError:
            continue
        assert isinstance(result, Grid)
