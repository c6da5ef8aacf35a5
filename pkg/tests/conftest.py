"""
公共夹具：小网格、二次型，以及指向 pytest 临时目录的暂存根
"""
import numpy as np
import pytest

from fieldint.core.quadforms import from_action_density
from fieldint.core.spaces import Boundary, GridSpec, build_grid


@pytest.fixture(autouse=True)
def isolated_tmp(tmp_path, monkeypatch):
    """暂存目录放进每个测试自己的临时目录"""
    root = tmp_path / "staging"
    monkeypatch.setenv("FIELDINT_TMP_DIR", str(root))
    return root


@pytest.fixture
def line_grid():
    """一维 Dirichlet 网格，5 个内部格点"""
    return build_grid(GridSpec(extent=(7,), spacing=0.5, boundary=Boundary.DIRICHLET))


@pytest.fixture
def plane_grid():
    return build_grid(GridSpec(extent=(4, 5), spacing=(1.0, 0.5), boundary=Boundary.DIRICHLET))


@pytest.fixture
def line_form(line_grid):
    return from_action_density(line_grid, mass=1.0, stiffness=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
