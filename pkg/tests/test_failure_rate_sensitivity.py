"""With r_f = 0.004 the golden table is reproduced to its printed precision.

The bundled model uses r_f = 0.005. This test records how close the lower
failure rate gets, including the one cell (case 1, E2) that stays off.
"""

import numpy as np

from pepagg.experiment import TABLE1_CASES, TABLE1_MEASURES, bundled, load_golden, run_cases, values_array


def test_lower_failure_rate_matches_golden_table():
    cases = [dict(c, r_f=0.004) for c in TABLE1_CASES]
    results = run_cases(bundled("client_server.pepa"), cases, TABLE1_MEASURES)
    golden = load_golden()
    names = [m.name for m in TABLE1_MEASURES]
    want = {col: np.array([[c[col][n] for n in names] for c in golden["cases"]]) for col in ("approximate", "exact")}

    approx = values_array(results, "approximate")
    assert np.abs(approx - want["approximate"]).max() < 0.002

    exact = values_array(results, "exact")
    off = np.abs(exact - want["exact"]) > 0.005
    assert [(i, names[j]) for i, j in zip(*np.nonzero(off))] == [(0, "E2")]
