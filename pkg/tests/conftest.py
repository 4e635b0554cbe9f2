import pytest

from rydberg_jumps.model import LatticeSpec
from rydberg_jumps.presets import get_preset
from rydberg_jumps.trajectory import run_trajectory

# Long runs use dt = 1: the norm decays monotonically, so jump times are
# located exactly (to dt_min) whatever the step.
LONG_DT = 1.0


@pytest.fixture(scope="session")
def single_atom_long():
    """Single atom with the fig2a preset, 2e6 / gamma_e."""
    return run_trajectory(get_preset("fig2a"), LatticeSpec(1), 2e6, seeds=101, dt=LONG_DT)


class CriterionReport:
    """Collects the checks of one acceptance criterion into a single line."""

    lines: list[str] = []

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.checks: list[tuple[str, bool]] = []

    def check(self, text: str, ok: bool) -> bool:
        self.checks.append((text, bool(ok)))
        return bool(ok)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(ok for _, ok in self.checks)

    def finish(self) -> None:
        verdict = "PASS" if self.passed else "FAIL"
        detail = "; ".join(f"{text} [{'ok' if ok else 'FAIL'}]" for text, ok in self.checks)
        line = f"criterion {self.number} {verdict} ({self.title}): {detail}"
        CriterionReport.lines.append(line)
        print(line)
        failed = [text for text, ok in self.checks if not ok]
        assert not failed, "; ".join(failed)


@pytest.fixture
def criterion():
    def make(number, title):
        return CriterionReport(number, title)

    return make


def pytest_terminal_summary(terminalreporter):
    if CriterionReport.lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CriterionReport.lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
