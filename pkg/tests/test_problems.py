import math

import numpy as np
import pytest
import sympy as sp

from fkcompact.conv_quad import substantial_derivative_oracle
from fkcompact.problems import EXAMPLES, example1, example2, get_example, max_error
from fkcompact.solver import march

x_s, t_s = sp.symbols("x t", real=True)


def symbolic_solution(name, alpha, rho):
    U = 1 if name == "example1" else x_s
    return sp.exp(-rho * U * t_s) * (t_s ** (3 + alpha) + 1) * sp.sin(sp.pi * x_s)


@pytest.mark.parametrize("name", sorted(EXAMPLES))
@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
def test_forcing_consistent_with_solution(name, alpha):
    # D_s^alpha [P - exp(-rho U t) P(0)] = K P_xx + f, with the left side from the oracle
    prob = get_example(name, alpha)
    spec = prob.spec
    rho = sp.nsimplify(1) + sp.I
    P = symbolic_solution(name, sp.Rational(str(alpha)), rho)
    Pxx = sp.lambdify((x_s, t_s), sp.diff(P, x_s, 2), "numpy")
    for xv in (0.13, 0.5, 0.77):
        for tv in (0.1, 0.6, 1.0):
            Uv = 1.0 if name == "example1" else xv
            lhs = substantial_derivative_oracle(alpha, spec.rho, Uv, 3 + alpha, tv) * math.sin(math.pi * xv)
            rhs = spec.K_alpha * complex(Pxx(xv, tv)) + complex(spec.f(np.array(xv), tv))
            assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs))


@pytest.mark.parametrize("factory", [example1, example2])
def test_initial_and_boundary_data(factory):
    prob = factory(0.5)
    x = np.linspace(0, 1, 9)
    np.testing.assert_allclose(prob.spec.phi(x), prob.exact_at(x, 0.0), atol=1e-15)
    for t in (0.0, 0.4, 1.0):
        assert abs(prob.spec.psi1(t)) == 0
        assert abs(prob.exact_at([1.0], t)[0]) < 1e-14


def test_exact_values():
    assert example1(0.5).exact_at([0.5], 1.0)[0] == pytest.approx(2 * np.exp(-(1 + 1j)))
    assert example2(0.5).exact_at([0.5], 1.0)[0] == pytest.approx(2 * np.exp(-(1 + 1j) * 0.5))


def test_reference_configuration():
    spec = example1(0.3).spec
    assert (spec.K_alpha, spec.rho, spec.l, spec.T) == (0.5, 1 + 1j, 1.0, 1.0)


def test_get_example_aliases():
    assert get_example("1", 0.5).name == "example1"
    assert get_example("example2", 0.5).name == "example2"
    with pytest.raises(ValueError):
        get_example("example3", 0.5)


def test_max_error_default_level():
    prob = example1(0.5)
    run = march(prob.spec, 1, 1000, 10)
    assert max_error(run, prob) == pytest.approx(7.9792e-3, rel=1e-4)
    assert max_error(run, prob, level=0) == 0.0
