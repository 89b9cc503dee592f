import pytest

from supportkit.synthetic import bundled_path, default_registry, worked_example

from builders import build_dataset


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture()
def worked():
    return worked_example()


@pytest.fixture(scope="session")
def small_dataset():
    return build_dataset(seed=3, n_cases=80, n_articles=30)


@pytest.fixture(scope="session")
def bundled_corpus_dir():
    return bundled_path("synthetic_200")


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: exit criteria for the build")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
