import numpy as np
import pytest

from kanfriction import workflow
from kanfriction.errors import InvalidArgument
from kanfriction.friction import axis_params, generate_axis_dataset
from kanfriction.network import ArchSpec, predict
from kanfriction.plotting import plot_loss, plot_prediction


def test_snapshot_steps():
    assert workflow.snapshot_steps(300, 3) == [100, 200, 300]
    assert workflow.snapshot_steps(30, 1) == [30]
    assert workflow.snapshot_steps(2, 5) == [1, 2]
    with pytest.raises(InvalidArgument):
        workflow.snapshot_steps(10, 0)


def test_fit_kan_keeps_snapshots():
    data = generate_axis_dataset(3, 200, seed=0)
    res = workflow.fit_kan(data, ArchSpec.parse("[1,3,1]", 5, 3), steps=30, snapshots=3)
    assert list(res.snapshots) == [10, 20, 30]
    r2s = [workflow.evaluate(n, data)["r2"] for n in res.snapshots.values()]
    assert r2s[-1] == pytest.approx(res.r2)
    np.testing.assert_array_equal(res.snapshots[30].get_vector(), res.network.get_vector())


def test_fit_known_reports_relative_errors():
    res = workflow.fit_known(generate_axis_dataset(1, 300, seed=0), iterations=20000, truth=axis_params(1))
    assert set(res.relative_errors) == {"k1", "k2", "k3", "k4"}
    assert max(res.relative_errors.values()) <= 1e-3
    assert res.r2 > 0.9999


def test_evaluate_callable_and_network():
    data = generate_axis_dataset(2, 50, seed=0)
    ev = workflow.evaluate(lambda v: data.torques, data)
    assert ev["r2"] == 1 and ev["residuals"]["max_abs"] == 0 and ev["n"] == 50


def test_pipeline_rejects_mismatched_clean_reference():
    data = generate_axis_dataset(1, 100, seed=0)
    other = generate_axis_dataset(1, 100, seed=1)
    with pytest.raises(InvalidArgument):
        workflow.run_pipeline(data, ArchSpec.parse("[1,2,1]", 5, 3), steps=3, clean=other)


def test_pipeline_stages_consistent():
    data = generate_axis_dataset(1, 300, seed=0)
    res = workflow.run_pipeline(data, ArchSpec.parse("[1,[3,1],1]", 5, 3), steps=20, clean=data)
    assert set(res.r2) == {"fit", "refit", "symbolic", "symbolic_vs_clean"}
    assert res.r2["symbolic"] == res.r2["symbolic_vs_clean"]
    np.testing.assert_allclose(res.model.evaluate(data.velocities), predict(res.model.network, data.velocities),
                               rtol=1e-12, atol=1e-12)
    for old, new in zip(res.pre_prune.layers, res.post_prune.layers):
        assert np.all(new.edge_mask <= old.edge_mask)


def test_plots_are_reproducible(tmp_path):
    v = np.linspace(-1, 1, 30)
    a = plot_prediction(v, v**3, v**3 + 0.01, tmp_path / "a.svg", title="t", extra={"step 1": v})
    b = plot_prediction(v, v**3, v**3 + 0.01, tmp_path / "b.svg", title="t", extra={"step 1": v})
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().lstrip().startswith("<?xml")
    c = plot_loss([[1, 1.0], [2, 0.1], [3, 0.01]], tmp_path / "loss.svg")
    assert c.stat().st_size > 0
