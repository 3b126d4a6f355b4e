import json

import numpy as np
import pytest

from stochfet import io
from stochfet.errors import DeviceLookupError, ModelFormatError, ParseError
from stochfet.train import r_squared


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_small_file(tmp_path):
    p = write(tmp_path / "m.csv", "device_id,v_gate,i_drain\n5,0.1,1e-6\n9,0.2,2.5E-6\n5,0.3,3e-6\n")
    data = io.load_measurements(p)
    assert len(data) == 3 and data.device_count == 2
    assert data.device_id.tolist() == [0, 1, 0]
    assert data.device_labels.tolist() == [5, 9]
    assert data.scaling.i_scale == 3e-6
    assert data.scaling.v_mean == pytest.approx(0.2)


def test_columns_in_any_order(tmp_path):
    p = write(tmp_path / "m.csv", "i_drain,device_id,v_gate\n1e-6,0,0.1\n2e-6,1,0.2\n")
    data = io.load_measurements(p)
    assert data.i_drain.tolist() == [1e-6, 2e-6]


@pytest.mark.parametrize("body,line,word", [
    ("device_id,v_gate,i_drain\n0,0.1,1e-6\n1,0.2,-1e-6\n", 3, "negative"),
    ("device_id,v_gate,i_drain\n0,0.1,1e-6\n0,abc,1e-6\n", 3, "not numeric"),
    ("device_id,v_gate\n0,0.1\n", 1, "missing column"),
    ("device_id,v_gate,i_drain\n0,0.1\n", 2, "expected 3 fields"),
    ("device_id,v_gate,i_drain\n0.5,0.1,1e-6\n", 2, "integer"),
    ("device_id,v_gate,i_drain\n0,nan,1e-6\n", 2, "not finite"),
])
def test_parse_errors_name_the_line(tmp_path, body, line, word):
    p = write(tmp_path / "bad.csv", body)
    with pytest.raises(ParseError) as info:
        io.load_measurements(p)
    assert f":{line}:" in str(info.value) and word in str(info.value)


def test_empty_inputs(tmp_path):
    with pytest.raises(ParseError):
        io.load_measurements(write(tmp_path / "e.csv", ""))
    with pytest.raises(ParseError):
        io.load_measurements(write(tmp_path / "h.csv", "device_id,v_gate,i_drain\n"))


def test_csv_roundtrip_is_exact(tmp_path, small_data):
    data = small_data[0]
    p = tmp_path / "d.csv"
    io.save_measurements(data, p)
    back = io.load_measurements(p)
    assert np.array_equal(back.v_gate, data.v_gate)
    assert np.array_equal(back.i_drain, data.i_drain)
    assert np.array_equal(back.device_id, data.device_id)
    rng = np.random.default_rng(0)
    vals = rng.normal(size=200) * 10.0 ** rng.integers(-300, 300, 200)
    io.write_csv(tmp_path / "x.csv", ("a", "b"), [vals, vals[::-1]])
    (a, b), _ = io.read_csv_columns(tmp_path / "x.csv", ("a", "b"))
    assert np.array_equal(a, vals) and np.array_equal(b, vals[::-1])


def test_model_roundtrip_bit_exact_and_byte_stable(tmp_path, small_model):
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    io.save_model(small_model, p1)
    m = io.load_model(p1)
    for x, y in zip(m.params.arrays(), small_model.params.arrays()):
        assert np.array_equal(x, y)
    assert np.array_equal(m.embeddings, small_model.embeddings)
    assert m.scaling == small_model.scaling and m.config == small_model.config
    assert m.train_config == small_model.train_config and m.log == small_model.log
    assert np.array_equal(m.embedding_gaussian.cov, small_model.embedding_gaussian.cov)
    io.save_model(m, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_model_file_errors(tmp_path, small_model):
    p = tmp_path / "m.json"
    io.save_model(small_model, p)
    text = p.read_text()
    write(tmp_path / "trunc.json", text[: len(text) // 2])
    with pytest.raises(ModelFormatError, match="not valid JSON"):
        io.load_model(tmp_path / "trunc.json")

    d = json.loads(text)
    d["version"] = 99
    write(tmp_path / "v.json", json.dumps(d))
    with pytest.raises(ModelFormatError, match="version"):
        io.load_model(tmp_path / "v.json")

    # K=3 head but only 2K output columns in the last layer
    d = json.loads(text)
    last = d["layers"][-1]
    rows = last["rows"]
    w = np.array(last["weights"]).reshape(rows, 9)[:, :6]
    last.update(cols=6, weights=w.reshape(-1).tolist(), bias=last["bias"][:6])
    write(tmp_path / "k.json", json.dumps(d))
    with pytest.raises(ModelFormatError, match="layer 2"):
        io.load_model(tmp_path / "k.json")

    d = json.loads(text)
    d["layers"][0]["weights"] = d["layers"][0]["weights"][:-1]
    write(tmp_path / "short.json", json.dumps(d))
    with pytest.raises(ModelFormatError, match="expected"):
        io.load_model(tmp_path / "short.json")

    d = json.loads(text)
    del d["scaling"]
    write(tmp_path / "noscale.json", json.dumps(d))
    with pytest.raises(ModelFormatError):
        io.load_model(tmp_path / "noscale.json")

    write(tmp_path / "other.json", '{"format": "something-else"}')
    with pytest.raises(ModelFormatError):
        io.load_model(tmp_path / "other.json")
    with pytest.raises(ModelFormatError):
        io.load_model(tmp_path / "missing.json")


def test_measurements_for_model_use_model_mapping(tmp_path, small_model, small_data):
    data = small_data[0]
    p = tmp_path / "d.csv"
    io.save_measurements(data.subset(np.arange(200)), p)
    again = io.load_measurements_for_model(p, small_model)
    assert again.scaling == small_model.scaling
    assert r_squared(small_model, again) == pytest.approx(r_squared(small_model, data.subset(np.arange(200))), rel=1e-14)
    write(tmp_path / "u.csv", "device_id,v_gate,i_drain\n999,0.1,1e-6\n")
    with pytest.raises(DeviceLookupError):
        io.load_measurements_for_model(tmp_path / "u.csv", small_model)


def test_waveform_reader(tmp_path):
    w = io.load_waveform(write(tmp_path / "w.csv", "time,v_gate\n0,0\n1e-3,0.9\n2e-3,0\n"))
    assert w.v_gate.tolist() == [0, 0.9, 0]
    with pytest.raises(ParseError):
        io.load_waveform(write(tmp_path / "bad.csv", "t,v\n0,0\n"))
