import pytest

from foldkit.encoder import EncoderConfig, init_encoder
from foldkit.synthetic import generate_tokens

# frozen acceptance setup: dim 64, 4 heads, 12 blocks, seed 7, n=196, correlation 0.3
ACCEPT_SEED = 7


@pytest.fixture(scope="session")
def toy_setup():
    enc = init_encoder(EncoderConfig(dim=64, heads=4, blocks=12, mlp_ratio=4.0, seed=ACCEPT_SEED))
    seq = generate_tokens(ACCEPT_SEED, 196, 64, 0.3)
    return enc, seq


@pytest.fixture(scope="session")
def small_setup():
    enc = init_encoder(EncoderConfig(dim=16, heads=2, blocks=4, seed=3))
    seq = generate_tokens(3, 40, 16, 0.3)
    return enc, seq


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
