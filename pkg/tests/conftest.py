import numpy as np
import pytest

import uscatter as us


@pytest.fixture
def u4():
    """Canonical fixture: p=2, n=1, M=1, m=1 (4 cells, measure 1/2 each)."""
    return us.build_grid(2, 1, 1, 1)


@pytest.fixture
def p3():
    return us.build_grid(3, 1, 1, 1)


@pytest.fixture
def u4_gen(u4):
    return us.assemble_spec(us.ConstantKernel(1.0), u4)


@pytest.fixture
def u4_n0(u4):
    return us.lattice_function(u4, [2.0, 0.0, 0.0, 0.0])


@pytest.fixture
def u4_pair(u4_gen):
    return us.make_steady_pair(u4_gen)
