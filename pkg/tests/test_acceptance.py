"""One test per acceptance criterion; each prints a single PASS/FAIL line."""
import pytest

from ergolab import cli
from ergolab.acceptance import CRITERIA, criterion_11

SEED = 0


def _report(res, capsys):
    with capsys.disabled():
        print("\n" + res.line())


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    res = CRITERIA[number](SEED)
    _report(res, capsys)
    assert res.passed, res.detail


def test_criterion_11_determinism(tmp_path, capsys):
    first = tmp_path / "first"
    code = cli.main(["acceptance", "--seed", str(SEED), "--out", str(first), "--no-rerun", "--reproducible"])
    assert code in (0, 1)
    res = criterion_11(SEED, first)
    _report(res, capsys)
    assert res.passed, res.detail
