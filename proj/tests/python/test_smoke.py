import csv

import numpy as np
import pytest

import fxisort


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    root = tmp_path_factory.mktemp("fx")
    opts = dict(count=8, crop=120, bin=2, separation=0.002)
    fxisort.generate("T", 3, str(root / "T"), **opts)
    fxisort.generate("F", 3, str(root / "F"), **opts)
    info = fxisort.train_ei(str(root / "T"), str(root / "model"))
    return root, info


def test_dataset_arrays(small):
    root, _ = small
    d = fxisort.load_dataset(str(root / "F"))
    assert d["patterns"].shape == (8, 60, 60)
    assert d["patterns"].dtype == np.float32
    assert d["masks"].dtype == np.bool_
    assert not d["masks"][0, 30, 30]
    assert np.all(d["patterns"][~d["masks"]] == 0)
    assert all(m["label"] == "icosahedron" for m in d["meta"])
    assert all(0.01 <= m["true_fluence"] <= 1.1 for m in d["meta"])


def test_training_and_self_match(small):
    root, info = small
    assert info["templates"] == 8
    assert 1 <= info["rank"] <= 7
    for method in ("ei", "ll"):
        reports, throughput = fxisort.classify(str(root / "model"), str(root / "T"), method=method)
        assert [r["matched_id"] for r in reports] == list(range(8))
        assert max(r["c_error"] for r in reports) <= 1e-9
        assert throughput["frames"] == 8


def test_classify_evaluate_round_trip(small, tmp_path):
    root, _ = small
    out = tmp_path / "r.csv"
    reports, _ = fxisort.classify(str(root / "model"), str(root / "F"), method="ll", out=str(out),
                                  workers=2, scale_search=True, threshold=0.5)
    with open(out) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == len(reports) == 8
    assert [int(r["matched_id"]) for r in rows] == [r["matched_id"] for r in reports]
    summary = fxisort.evaluate(str(out), str(root / "F"), out=str(tmp_path / "summary"))
    assert summary["frames"] == 8
    assert summary["mean_fluence_error"] >= 0
    for name in ("table2.csv", "table3.csv", "fig3_curves.csv", "per_frame.csv"):
        assert (tmp_path / "summary" / name).exists()


def test_c_error_properties():
    values, mask = fxisort.diffract("sphere", 180.0, crop=160, bin=2)
    c, s, phi = fxisort.c_error(0.5 * values, values, mask, mask)
    assert c == pytest.approx(0.0, abs=1e-12)
    assert s == 1.0
    assert phi == pytest.approx(0.5)
    c_search, _, _ = fxisort.c_error(values, values, mask, mask, scale_search=True)
    assert c_search <= 1e-12


def test_bench_and_errors(small):
    root, _ = small
    report = fxisort.bench(str(root / "model"), str(root / "F"), repeats=3, scaling=[1, 2])
    assert [row["workers"] for row in report["scaling"]] == [1, 2]
    with pytest.raises(fxisort.Error, match="configuration"):
        fxisort.bench(str(root / "model"), str(root / "F"), repeats=1)
    with pytest.raises(fxisort.Error):
        fxisort.load_dataset(str(root / "missing"))
    with pytest.raises(fxisort.Error):
        fxisort.generate("Q", 1, str(root / "q"))


def test_spearman():
    assert fxisort.spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
