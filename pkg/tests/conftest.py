from importlib import resources

import pytest

from privmps.cli import load_csv
from privmps.scoring import Schema

DATA = resources.files("privmps") / "data"

# criterion number -> (title, outcome); filled by the acceptance tests
ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture(scope="session")
def patients_paths():
    return {
        "schema": str(DATA / "patients_schema.json"),
        "owners": [str(DATA / "patients_owner1.csv"), str(DATA / "patients_owner2.csv")],
    }


@pytest.fixture(scope="session")
def patients(patients_paths):
    schema = Schema.load(patients_paths["schema"])
    return schema, [load_csv(p, schema) for p in patients_paths["owners"]]


def pytest_runtest_makereport(item, call):
    # a failing fixture counts against the criterion too
    if call.when == "teardown" or (call.when == "setup" and call.excinfo is None):
        return
    failed = call.excinfo is not None
    for mark in item.iter_markers("criterion"):
        number, title = mark.args
        prev = ACCEPTANCE.get(number, (title, "PASS"))[1]
        ACCEPTANCE[number] = (title, "FAIL" if failed or prev == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, outcome = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {outcome}  {title}")
