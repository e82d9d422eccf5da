from __future__ import annotations

from pathlib import Path

import pytest

from spvr.syntax import Language, SourceUnit, parse

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def case_vuln() -> SourceUnit:
    return SourceUnit((FIXTURES / "case_study_vuln.c").read_text(), Language.C)


@pytest.fixture(scope="session")
def case_fixed() -> SourceUnit:
    return SourceUnit((FIXTURES / "case_study_fixed.c").read_text(), Language.C)


@pytest.fixture(scope="session")
def case_trees(case_vuln, case_fixed):
    return parse(case_vuln), parse(case_fixed)
