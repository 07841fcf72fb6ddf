import numpy as np
import pytest

from models import Couplings, LadderSpec, RunConfig


@pytest.fixture
def rough_smooth():
    """N=3、L=2 的默认几何（左粗糙、右光滑）。"""
    return LadderSpec(N=3, L=2)


@pytest.fixture
def couplings():
    return Couplings(g=0.7, lam=1.3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ed_config(tmp_path):
    """小尺寸 ED 运行配置，输出写到临时目录。"""

    def make(**overrides):
        base = {
            "task": "ed",
            "model": "unitary",
            "N": 2,
            "L": 2,
            "g": 0.8,
            "lam": 1.1,
            "output": str(tmp_path / "results"),
        }
        base.update(overrides)
        return RunConfig.model_validate(base)

    return make
