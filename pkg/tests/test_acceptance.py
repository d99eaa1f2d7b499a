"""Acceptance criteria 1-10 on the default experiment.

Every criterion prints one PASS/FAIL line (collected in the pytest terminal
summary).  Run standalone with ``python tests/test_acceptance.py``.
The default experiment is 128 x 129 cells up to t = 50; expect a few minutes.
"""

from __future__ import annotations

import sys

import pytest

from linbgk.config import ExperimentConfig
from linbgk.experiments import Experiment, SuiteResult, run_suite

CRITERIA = {
    1: ("collision operator identities on 1000 random fields", ("collision",)),
    2: ("order-0 norms nonincreasing in both frames", ("shifted_monotone", "scaled_monotone")),
    3: ("x-derivative norm bounded by its initial value", ("derivative_bound",)),
    4: ("first velocity sensitivity envelope and growth exponent", ("velocity_envelope",)),
    5: ("first temperature sensitivity envelope", ("temperature_envelope",)),
    6: ("orders 2 and 3 bounded by t^n", ("velocity_higher", "temperature_higher")),
    7: ("direct sensitivities match z-collocation", ("oracle",)),
    8: ("weighted moment conservation", ("conservation",)),
    9: ("acoustic residual ordering and eigen-speeds", ("acoustic",)),
    10: ("manufactured-solution order of the second-order scheme", ("mms",)),
}

LINES: dict[int, str] = {}


def evaluate(exp: Experiment, number: int) -> tuple[bool, list[SuiteResult]]:
    title, suites = CRITERIA[number]
    results = [run_suite(exp, name) for name in suites]
    checks = [c for r in results for c in r.checks]
    ok = bool(checks) and all(c.passed for c in checks)
    worst = [f"{c.name}={c.value:.3e} (limit {c.threshold:.3e})" for c in checks if not c.passed]
    key = [f"{c.name}={c.value:.3e}" for c in checks
           if not c.name.startswith(("flat_equivalence", "square_bound"))][:4]
    LINES[number] = (f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title}; "
                     + "; ".join(worst or key))
    return ok, results


@pytest.fixture(scope="module")
def experiment():
    return Experiment(ExperimentConfig())


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(experiment, number):
    ok, results = evaluate(experiment, number)
    print(LINES[number])
    failing = [f"{c.suite}.{c.name}: {c.value:.4e} vs {c.threshold:.4e} {c.detail}"
               for r in results for c in r.checks if not c.passed]
    assert ok, "\n".join(failing) or "no checks ran"


if __name__ == "__main__":
    exp = Experiment(ExperimentConfig())
    status = [evaluate(exp, n)[0] for n in sorted(CRITERIA)]
    for n in sorted(CRITERIA):
        print(LINES[n])
    sys.exit(0 if all(status) else 1)
