"""One test per acceptance criterion; a verdict line per criterion is printed in the summary."""

import pytest

from kacgibbs import acceptance

from conftest import ACCEPTANCE_LINES


@pytest.mark.parametrize("number", range(1, len(acceptance.CRITERIA) + 1))
def test_criterion(number):
    result = acceptance.CRITERIA[number - 1]()
    line = result.line()
    ACCEPTANCE_LINES.append(line)
    print(line)
    for c in result.checks:
        print(f"    [{'ok' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    assert result.passed, line
