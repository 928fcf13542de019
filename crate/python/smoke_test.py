"""Smoke test for the `nete` Python extension.

Build and install first, e.g. `maturin build -m crates/py/Cargo.toml` and pip install the wheel,
then run `python python/smoke_test.py`.
"""

import math
import sys
import tempfile

import nete


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    assert close(nete.pareto_quantile(0.75, 2.0), 1.0)
    assert close(nete.hill_gamma([8.0, 4.0, 2.0, 1.0], 3), 2 * math.log(2))
    assert close(nete.moment_factor(1.0, 0.4), 5 / 3)
    assert close(nete.ground_truth_nete(2.0, 2.5), 5.0)
    assert close(nete.select_threshold(10_000, 0.5), 2.5)

    try:
        nete.moment_factor(2.0, 0.5)
    except ArithmeticError:
        pass
    else:
        raise AssertionError("expected an infinite-moment error")

    gamma, k = nete.adaptive_hill([5.0] * 100)
    assert gamma == 0.0 and k == 99

    table, truth = nete.generate_synthetic(1.0, 2.5, n=4000, d_z=10, d_u=3, seed=1)
    assert len(table) == 4000 and close(truth, 5 / 3)
    assert all(n > 0 for n in table.norms())

    est = nete.estimate_nete(table, method="evt_dr", seed=3)
    assert close(est["theta_hat"], est["eta_hat"] * est["mu_hat"])
    assert est["n_tail"] >= 1
    again = nete.estimate_nete(table, method="evt_dr", seed=3)
    assert again == est

    naive = nete.estimate_nete(table, method="naive-ipw", seed=3, outcome="linear")
    assert naive["mu_hat"] == 1.0

    with tempfile.NamedTemporaryFile(suffix=".csv") as f:
        table.save_csv(f.name)
        back = nete.ObservationTable.load_csv(f.name)
        assert back.y == table.y

    u = nete.normalize_extremes([[float(i), float(i % 7)] for i in range(100)])
    assert all(v > 0 for row in u for v in row)

    print(f"nete smoke test passed: theta_hat = {est['theta_hat']:.4f} (truth {truth:.4f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
