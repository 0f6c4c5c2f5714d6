import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from armamax import ModelConfig, build_k2_matrix, eigensolve  # noqa: E402
from armamax.maxdist import spectral_expansion  # noqa: E402


@pytest.fixture(scope="session")
def default_ctx():
    """r = 0.5, s = 1, x = 2, standard normal innovations, product-normal start."""
    return ModelConfig()


@pytest.fixture(scope="session")
def default_mat(default_ctx):
    return build_k2_matrix(default_ctx)


@pytest.fixture(scope="session")
def default_es(default_mat):
    return eigensolve(default_mat)


@pytest.fixture(scope="session")
def default_expansion(default_mat, default_es):
    return spectral_expansion(default_mat, default_es)


# acceptance criteria report one line each, also when output is captured
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    def record(k: int, ok: bool, detail: str) -> None:
        line = f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE[k] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
