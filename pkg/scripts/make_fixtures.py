"""Regenerate the CSV fixtures under ``fixtures/``.

Run from the repository root: ``python3 scripts/make_fixtures.py``. The
output is deterministic, so re-running it leaves the files unchanged. The
golden portfolio output is regenerated last, from the fresh returns fixture.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from drcov.cli import run
from drcov.synthetic import gaussian_samples, make_rng, spiked_covariance

ROOT = Path(__file__).resolve().parent.parent / "fixtures"


def _write(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        w.writerows(rows)


def returns_fixture() -> None:
    # 8 assets, two common factors, monthly-scale volatility
    p, T = 8, 122
    cov = spiked_covariance(p, 2, 100.0) * 0.01**2
    rng = make_rng(20240101)
    r = 0.004 + gaussian_samples(cov, T, rng)
    months = [f"{1990 + (m // 12)}-{m % 12 + 1:02d}" for m in range(T)]
    header = ["date"] + [f"asset{j + 1}" for j in range(p)]
    _write(ROOT / "returns_synthetic.csv", header, [[d] + [f"{v:.6f}" for v in row] for d, row in zip(months, r)])


def labeled_fixture() -> None:
    # two unit-variance classes whose means are 6 standard deviations apart
    p, per_class = 4, 100
    rng = make_rng(7)
    x0 = gaussian_samples(np.eye(p), per_class, rng)
    x1 = gaussian_samples(np.eye(p), per_class, rng)
    x1[:, 0] += 6.0
    x = np.vstack([x0, x1])
    y = np.repeat([0, 1], per_class)
    order = rng.permutation(y.size)
    header = [f"f{j + 1}" for j in range(p)] + ["label"]
    _write(ROOT / "two_gaussians.csv", header, [[f"{v:.6f}" for v in x[i]] + [int(y[i])] for i in order])


def tiny_fixtures() -> None:
    _write(ROOT / "diag123.csv", None, [["1", "0", "0"], ["0", "2", "0"], ["0", "0", "3"]])
    _write(ROOT / "samples_tiny.csv", ["x1", "x2", "x3"], [
        ["0.5", "-0.2", "1.1"], ["-0.3", "0.4", "0.9"], ["1.2", "0.1", "-0.7"],
        ["0.0", "-0.8", "0.3"], ["-1.1", "0.6", "0.2"], ["0.7", "0.9", "-0.4"],
    ])
    _write(ROOT / "returns_tiny.csv", ["date", "A", "B"], [
        ["2001-01", "0.01", "0.02"], ["2001-02", "-0.01", "0.00"], ["2001-03", "0.03", "-0.02"],
        ["2001-04", "0.00", "0.01"], ["2001-05", "0.02", "0.01"],
    ])
    _write(ROOT / "labeled_tiny.csv", ["height", "width", "label"], [
        ["1.0", "2.0", "0"], ["1.1", "2.1", "0"], ["0.9", "1.8", "0"],
        ["3.0", "4.0", "1"], ["3.2", "4.1", "1"], ["2.9", "3.9", "1"],
    ])
    bad = ROOT / "malformed"
    _write(bad / "returns_no_header.csv", None, [["2001-01", "0.01", "0.02"], ["2001-02", "-0.01", "0.00"]])
    _write(bad / "returns_bad_cell.csv", ["date", "A", "B"], [["2001-01", "0.01", "0.02"], ["2001-02", "oops", "0.00"]])
    _write(bad / "returns_ragged.csv", ["date", "A", "B"], [["2001-01", "0.01", "0.02"], ["2001-02", "0.00"]])
    _write(bad / "labeled_no_header.csv", None, [["1.0", "2.0", "0"], ["3.0", "4.0", "1"]])
    _write(bad / "labeled_bad_label.csv", ["f1", "f2", "label"], [["1.0", "2.0", "0"], ["3.0", "4.0", "one"]])
    _write(bad / "cov_asymmetric.csv", None, [["1", "0.5"], ["0.4", "1"]])
    _write(bad / "cov_not_square.csv", None, [["1", "0", "0"], ["0", "1", "0"]])


def golden_portfolio() -> None:
    # only the deterministic files are kept; metadata.json records wall time
    out = ROOT / "golden" / "portfolio_kl"
    code = run(["portfolio", "--config", str(ROOT / "configs" / "portfolio_kl.json"), "--out", str(out)])
    if code != 0:
        raise SystemExit(code)
    (out / "metadata.json").unlink()


if __name__ == "__main__":
    returns_fixture()
    labeled_fixture()
    tiny_fixtures()
    golden_portfolio()
