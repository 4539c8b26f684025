import numpy as np
import pytest

from loi_bench.game import CHICKEN, builtin_scenario, parse_map
from loi_bench.trainer import TrainingConfig, train

CORRIDOR = """\
size = 7x3
*.0.1.*
.......
.......
"""


@pytest.fixture(scope="session")
def small():
    return builtin_scenario("small", CHICKEN).with_rules(episode_length=200)


@pytest.fixture(scope="session")
def corridor():
    return parse_map(CORRIDOR, name="corridor")


@pytest.fixture(scope="session")
def sp_pools(small):
    """Six short self-play pools of 10 checkpoints each on the small map."""
    pools = []
    for i in range(6):
        cfg = TrainingConfig("small", "chicken", total_steps=4000, save_interval=400, seed=100 + i, run_name=f"t{i}")
        pools.append(train(cfg, small, CHICKEN).pools[0])
    return pools


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
