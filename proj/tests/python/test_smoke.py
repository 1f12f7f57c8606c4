import json

import numpy as np
import pytest

import prunekit


def test_vgg16_counts():
    m = prunekit.build("vgg16")
    report = m.meter()
    params = {r["layer_id"]: r["params"] for r in report["rows"] if r["params"]}
    assert len(params) == 15
    assert params["conv1"] == 1792
    assert params["conv13"] == 2359808
    assert params["fc1"] == 262656
    assert report["total_params"] == 14982474 == m.params()
    assert prunekit.format_fixed2(report["size_mb"]) == "57.15"


def test_prune_matches_plan_and_keeps_shapes():
    m = prunekit.build("vgg16", width=0.25, seed=3)
    p = m.prune("conv13", keep=32)
    assert p.out_channels("conv13") == 32
    assert m.out_channels("conv13") == 128
    assert p.params() < m.params()
    q = m.apply_plan(json.dumps([{"layer": "conv13", "keep": 32}]))
    assert q == p
    x = np.random.default_rng(0).random((2, 3, 32, 32), dtype=np.float32)
    assert p.predict(x).shape == (2, 10)


def test_prune_removes_smallest_norm_filters():
    m = prunekit.build("vgg16", width=0.25, seed=5)
    norms = m.filter_norms("conv2")
    removed = sorted(i for i, _ in norms[:4])
    p = m.prune("conv2", m=4)
    kept = [i for i in range(16) if i not in removed]
    np.testing.assert_array_equal(p.weights("conv2"), m.weights("conv2")[kept])


def test_errors_map_to_python_exceptions(tmp_path):
    m = prunekit.build("mobilenetv1")
    with pytest.raises(prunekit.PlanError):
        m.prune("dw1", m=1)
    with pytest.raises(prunekit.ShapeError):
        m.predict(np.zeros((1, 1, 32, 32), dtype=np.float32))
    bad = tmp_path / "bad.pkpt"
    bad.write_bytes(b"nope")
    with pytest.raises(prunekit.FormatError):
        prunekit.Model.load(str(bad))


def test_checkpoint_round_trip(tmp_path):
    m = prunekit.build("mobilenetv1", width=0.25, seed=1)
    m.meta = {"note": "x"}
    path = tmp_path / "m.pkpt"
    m.save(str(path))
    back = prunekit.Model.load(str(path))
    assert back == m
    assert back.meta["note"] == "x"
    assert len(prunekit.sha256_file(str(path))) == 64


def test_cli_in_process(tmp_path):
    code, out, err = prunekit.run_cli(["report", "--arch", "vgg16"])
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "layer_id,kind,params,flops,out_shape"
    assert lines[-1].startswith("TOTAL,total,14982474,")

    code, _, err = prunekit.run_cli(["train", "--arch", "vgg16"])
    assert code == 1 and "--data" in err

    data = tmp_path / "mnist"
    code, _, _ = prunekit.run_cli(
        ["synth-data", "--kind", "mnist", "--out", str(data), "--count", "12", "--test-count", "3"]
    )
    assert code == 0
    images, labels, classes = prunekit.load_dataset(str(data))
    assert images.shape == (12, 1, 28, 28)
    assert labels.shape == (12,)
    assert classes == 10
    assert 0.0 <= images.min() and images.max() <= 1.0
