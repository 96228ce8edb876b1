"""The nine acceptance criteria at full scale, one pass/fail line each."""

import json
import time


from conftest import ACCEPTANCE_LINES
from tcdiff.harness import acceptance
from tcdiff.harness.cli import main
from tcdiff.harness.io import load_results

SEED = 20240607
FULL = acceptance.Scale()


def _report(res):
    line = res.line() + f" [{res.runtime_s:.1f}s]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return res


def _run(fn):
    t0 = time.perf_counter()
    res = fn(FULL, SEED)
    res.runtime_s = time.perf_counter() - t0
    return _report(res)


def test_criterion_1_time_change_law():
    res = _run(acceptance.criterion_timechange_law)
    assert res.passed, res.detail


def test_criterion_2_clock_identities():
    res = _run(acceptance.criterion_clock_identities)
    assert res.passed, res.detail


def test_criterion_3_radial_dichotomy():
    res = _run(acceptance.criterion_radial)
    assert res.passed, res.detail
    # each of the two radial cases within two minutes
    assert res.runtime_s < 240


def test_criterion_4_three_route_dichotomy():
    res = _run(acceptance.criterion_dichotomy)
    assert res.passed, res.detail


def test_criterion_5_nested_integral_classifier():
    res = _run(acceptance.criterion_khasminskii)
    assert res.passed, res.detail


def test_criterion_6_feller_vs_monte_carlo():
    res = _run(acceptance.criterion_feller)
    assert res.passed, res.detail


def test_criterion_7_market():
    res = _run(acceptance.criterion_market)
    assert res.passed, res.detail


def test_criterion_8_growth_counterexample():
    res = _run(acceptance.criterion_counterexample)
    assert res.passed, res.detail


def test_criterion_9_determinism(tmp_path):
    runs = []

    def quick():
        out = tmp_path / f"run{len(runs)}"
        code = main(["accept", "--quick", "--seed", str(SEED), "--out", str(out)], echo=False)
        assert code == 0, "accept --quick must exit 0"
        runs.append(out)
        return load_results(out / "results.json")

    res = acceptance.criterion_determinism(SEED, quick)
    _report(res)
    assert res.passed, res.detail
    a = json.loads((runs[0] / "results.json").read_text())
    assert "timing" in a and a["schema"] == 1
