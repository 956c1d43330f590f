import json

import numpy as np
import pytest

from kanfriction.checkpoint import dumps, load_checkpoint, save_checkpoint
from kanfriction.errors import FormatError
from kanfriction.network import ArchSpec, init_network, network_forward


@pytest.fixture
def trained_like(tmp_path):
    net = init_network(ArchSpec.parse("[1,[2,1],1]", 6, 3), seed=7)
    rng = np.random.default_rng(0)
    net.calibrate(rng.uniform(-1, 1, 40), rng.uniform(-30, 30, 40))
    net.layers[0].edge_mask[1, 0] = 0
    net.node_masks[1][0] = 0
    net.layers[1].sym_fn[0][2] = "tanh"
    net.layers[1].sym_params[0, 2] = [1.0 / 3.0, -0.1, 2.5, 1e-17]
    net.layers[0].spline_coeffs[0, 0, 0] = 0.1 + 0.2
    return net


def test_save_load_save_is_byte_identical(trained_like, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(trained_like, a)
    save_checkpoint(load_checkpoint(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_round_trip_is_bitwise(trained_like, tmp_path):
    path = tmp_path / "net.json"
    save_checkpoint(trained_like, path)
    back = load_checkpoint(path)
    np.testing.assert_array_equal(back.get_vector(), trained_like.get_vector())
    for la, lb in zip(trained_like.layers, back.layers):
        np.testing.assert_array_equal(la.edge_mask, lb.edge_mask)
        assert la.grids == lb.grids
        assert la.sym_fn == lb.sym_fn
        assert la.apply_output_squash == lb.apply_output_squash
    for ma, mb in zip(trained_like.node_masks, back.node_masks):
        np.testing.assert_array_equal(ma, mb)
    for name in ("input_scale", "input_shift", "output_scale", "output_shift"):
        np.testing.assert_array_equal(getattr(back, name), getattr(trained_like, name))
    assert back.rng_seed == 7 and back.calibrated
    assert back.arch == trained_like.arch
    v = np.random.default_rng(5).uniform(-1.2, 1.2, 100)
    np.testing.assert_array_equal(network_forward(v, back), network_forward(v, trained_like))


def _corrupt(tmp_path, net, edit):
    doc = json.loads(dumps(net))
    edit(doc)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.mark.parametrize("edit,field", [
    (lambda d: d["layers"][0].__setitem__("base_weight", [[1.0]]), "layers[0].base_weight"),
    (lambda d: d["layers"][1]["spline_coeffs"][0].pop(), "layers[1].spline_coeffs"),
    (lambda d: d.pop("normalization"), "normalization"),
    (lambda d: d.__setitem__("format_version", 99), "format_version"),
    (lambda d: d["layers"][1]["symbolic"][0].__setitem__(2, {"fn": "nope", "params": [0, 0, 0, 0]}),
     "layers[1].symbolic[0][2].fn"),
    (lambda d: d["node_masks"].pop(), "node_masks"),
    (lambda d: d["layers"][0]["grids"][0].__setitem__("num_intervals", 0), "layers[0].grids[0]"),
])
def test_bad_files_name_the_field(trained_like, tmp_path, edit, field):
    path = _corrupt(tmp_path, trained_like, edit)
    with pytest.raises(FormatError) as err:
        load_checkpoint(path)
    assert err.value.field == field
    assert field in str(err.value)


def test_unreadable_file(tmp_path):
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "missing.json")
    (tmp_path / "junk.json").write_text("{not json")
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "junk.json")
