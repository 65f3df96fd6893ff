import os

import numpy as np
import pytest

from deadoil.config import parse_config
from deadoil.laws import Separable, make_generator, make_law, make_time_factor
from deadoil.model import CoefficientSet, ProblemSpec, build_problem

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")


def config_path(name):
    return os.path.join(CONFIGS, name)


def load_problem(name):
    return build_problem(parse_config(config_path(name)))


def zero_st(X, Y, t=0.0):
    return np.zeros(np.shape(X))


def sine(X, Y, t=0.0):
    return np.sin(np.pi * X) * np.sin(np.pi * Y)


def heat_coefficients():
    return CoefficientSet.from_laws(make_law("identity"), make_law("constant", c=0.0),
                                    make_law("constant", c=1.0), c1=1.0, c2=10.0, c3=1.0,
                                    delta_phi=1.0)


def heat_problem(T=0.01, u0=sine, p0=sine, U=zero_st, P=zero_st, beta1=1.0, beta2=1.0):
    return ProblemSpec(Lx=1.0, Ly=1.0, T=T, coefficients=heat_coefficients(), u0=u0, p0=p0,
                       U=U, P=P, beta1=beta1, beta2=beta2, q0=1.5)


@pytest.fixture(scope="session")
def demo_problem():
    return load_problem("demo.cfg")


@pytest.fixture(scope="session")
def demo_control_gen():
    return Separable(make_generator("sine_product", amp=5.0),
                     make_time_factor("linear", a=1.0, b=10.0))
