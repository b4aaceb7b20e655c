"""Smoke test for the Python bindings.

Build and install first:  pip install --no-build-isolation -e crates/py
"""

import math
import pathlib
import tempfile

import bargain_lab as bl


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAILED: {msg}")
    print(f"ok   {msg}")


def main():
    # sharing rule from the published sons coefficients
    gp, gy = bl.reservation_wage(-1.846, 0.747, 0.911)
    check(abs(gp - 0.405) < 0.002 and abs(gy - 0.493) < 0.002, f"reservation wage ({gp:.4f}, {gy:.4f})")
    s = bl.solve_sharing(21.117, 17.911, 26.709, gp, gy)
    check(abs(s["f_prime"] - 0.821) < 0.005, f"F' = {s['f_prime']:.4f}")

    lr = bl.lr_test(-13.365, 0.0, 4)
    check(2.0e-5 <= lr["p"] <= 2.6e-5, f"LR p = {lr['p']:.3e}")

    data, truth = bl.simulate(n=2000, seed=3, truth="collective", reveal_student_wages=True)
    check(len(data) == 2000, repr(data))
    check(truth["kind"] == "collective", "truth ledger returned")
    rec = data.records()[0]
    check("parent_wage" in rec and rec["parent_wage"] > 0, "records are dicts")

    with tempfile.TemporaryDirectory() as tmp:
        path = pathlib.Path(tmp) / "h.csv"
        data.write_csv(str(path))
        back = bl.load_dataset(str(path))
        check(back.records() == data.records(), "csv round trip")

    rep = bl.fit_battery(data, kinds=["unitary", "collective"], control_function=False)
    check(rep["collective_lr"] is not None, f"battery verdict: {rep['verdict_text']}")
    check(rep["unitary_lr"]["p"] < 0.05, "unitary restriction rejected on a collective truth")

    mdata, _ = bl.simulate(n=5000, seed=1, truth="mte")
    curve = bl.mte(mdata, outcome="outcome", covariates=["x1"], replications=20)
    check(len(curve["u_grid"]) == len(curve["mte"]) > 10, "mte curve on the support grid")
    check(math.isfinite(curve["tests"]["p_unobservable"]), "heterogeneity tests")

    try:
        bl.simulate(truth="neither")
    except ValueError as e:
        check("unknown truth" in str(e), "bad input raises ValueError")
    else:
        raise SystemExit("FAILED: bad truth accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
