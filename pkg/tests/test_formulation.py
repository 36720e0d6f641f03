import math

import pytest

from acopf.formulation import (
    FormulationBuilder,
    MatrixSense,
    Polynomial,
    Sense,
    check_point_names,
    evaluate,
    feasibility,
    split_name,
    var_name,
)
from shared.errors import MissingVariable, PointFormatError
from shared.schemas import ConstraintKind


def test_polynomial_canonical_form():
    x, y = Polynomial.variable(0), Polynomial.variable(1)

    assert (x + y) * (x - y) == x * x - y * y
    assert (x * y - y * x) == Polynomial()
    assert ((x + 1) ** 2).constant_term == 1.0
    assert (x * x * y).degree() == 3
    assert (x * x * y).degree(frozenset({0})) == 1


def test_polynomial_evaluation():
    x, y = Polynomial.variable(0), Polynomial.variable(1)
    poly = 3.0 * x * y - 2.0 * y + 0.5

    assert poly.evaluate([2.0, -1.0]) == pytest.approx(-6.0 + 2.0 + 0.5)
    assert poly.linear_coefficients() == {1: -2.0}
    assert not poly.is_affine


def test_names_round_trip():
    name = var_name("S", 1, 2, 1, part="im")

    assert name == "S.im[1,2,1]"
    assert split_name(name) == ("S", "im", (1, 2, 1))
    assert split_name("c[3]") == ("c", None, (3,))
    with pytest.raises(ValueError):
        split_name("not a name")


def _toy():
    builder = FormulationBuilder("toy")
    x = builder.add_variable("x[1]", 0.0, 2.0)
    y = builder.add_variable("y[1]")
    builder.add_constraint("sum", (1,), x + y + 1.0, Sense.EQ, 4.0)
    builder.add_constraint("prod", (1,), x * y, Sense.LE, 1.0)
    builder.add_cone("cone", (1,), [x], y)
    builder.add_psd("psd", (), [[x, y], [y, x]])
    builder.set_objective(x + 2.0 * y)
    return builder.build()


def test_builder_moves_constants_to_rhs():
    f = _toy()
    c = f.constraints_tagged("sum")[0]

    assert c.rhs == 3.0
    assert c.poly.constant_term == 0.0
    assert f.tags() == {"sum", "prod", "cone", "psd", "bound"}


def test_builder_rejects_bad_input():
    builder = FormulationBuilder("toy")
    x = builder.add_variable("x[1]")
    with pytest.raises(ValueError):
        builder.add_variable("x[1]")
    with pytest.raises(ValueError):
        builder.add_constraint("deg", (), x**5, Sense.LE)
    with pytest.raises(ValueError):
        builder.add_cone("cone", (), [x * x], x)
    with pytest.raises(ValueError):
        builder.add_constraint("inf", (), x * math.inf, Sense.LE)


def test_evaluate_residuals():
    f = _toy()
    report = evaluate(f, {"x[1]": 1.0, "y[1]": 2.0})

    assert report.objective == pytest.approx(5.0)
    assert report.residual("sum", (1,)).violation == pytest.approx(0.0)
    prod = report.residual("prod", (1,))
    assert prod.kind == ConstraintKind.LE
    assert prod.residual == pytest.approx(1.0)
    assert prod.violation == pytest.approx(1.0)
    assert report.residual("cone", (1,)).violation == 0.0
    # [[1, 2], [2, 1]] has eigenvalues -1 and 3
    assert report.psd_blocks[0].min_eigenvalue == pytest.approx(-1.0)
    assert report.max_violation == pytest.approx(1.0)


def test_evaluate_bound_violation():
    f = _toy()
    report = evaluate(f, {"x[1]": 3.0, "y[1]": 0.0})
    bound = report.residual("bound", ("x[1]",))

    assert bound.kind == ConstraintKind.BOUND
    assert bound.violation == pytest.approx(1.0)


def test_missing_variable():
    with pytest.raises(MissingVariable) as info:
        evaluate(_toy(), {"x[1]": 1.0})
    assert info.value.name == "y[1]"


def test_unknown_point_names():
    with pytest.raises(PointFormatError, match="z\\[9\\]"):
        check_point_names(_toy(), {"x[1]": 1.0, "z[9]": 0.0})


def test_feasibility_needs_positive_tolerance():
    with pytest.raises(ValueError):
        feasibility(_toy(), {"x[1]": 1.0, "y[1]": 2.0}, 0.0)


def test_negative_semidefinite_block_is_flipped():
    builder = FormulationBuilder("toy")
    x = builder.add_variable("x[1]")
    builder.add_psd("nsd", (), [[x]], MatrixSense.NSD)
    report = evaluate(builder.build(), {"x[1]": -2.0})

    assert report.psd_blocks[0].min_eigenvalue == pytest.approx(2.0)
    assert report.max_violation == 0.0


def test_feasibility_is_monotone_in_tolerance(rng):
    f = _toy()
    tolerances = [1e-9, 1e-6, 1e-3, 1e-1, 1.0, 10.0]
    for _ in range(50):
        point = {"x[1]": float(rng.uniform(-1.0, 3.0)), "y[1]": float(rng.uniform(-1.0, 3.0))}
        verdicts = [feasibility(f, point, tol)[0] for tol in tolerances]

        assert verdicts == sorted(verdicts)
        assert all(feasibility(f, point, tol)[1] == evaluate(f, point).max_violation for tol in tolerances)


def test_gram_matrices_are_positive_semidefinite(rng):
    dim = 4
    builder = FormulationBuilder("gram")
    entries = {}
    for i in range(dim):
        for j in range(i, dim):
            entries[(i, j)] = entries[(j, i)] = builder.add_variable(var_name("m", i + 1, j + 1))
    builder.add_psd("gram", (), [[entries[(i, j)] for j in range(dim)] for i in range(dim)])
    f = builder.build()

    for _ in range(100):
        u = rng.normal(size=(dim, int(rng.integers(1, dim + 1))))
        gram = u @ u.T
        point = {var_name("m", i + 1, j + 1): float(gram[i, j]) for i in range(dim) for j in range(i, dim)}
        report = evaluate(f, point)

        assert report.psd_blocks[0].min_eigenvalue >= -1e-10
        assert report.max_violation <= 1e-10
