import pytest

from tests.helpers import make_five_commit_repo, make_rename_repo


@pytest.fixture(scope="session")
def five_repo(tmp_path_factory):
    return make_five_commit_repo(tmp_path_factory.mktemp("five") / "repo")


@pytest.fixture(scope="session")
def rename_repo(tmp_path_factory):
    return make_rename_repo(tmp_path_factory.mktemp("rename") / "repo")


def pytest_terminal_summary(terminalreporter):
    from tests.test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
