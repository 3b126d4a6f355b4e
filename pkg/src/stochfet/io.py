"""CSV ingestion/emission and the versioned JSON model file.

Model file schema (``format: "stochfet-model"``, ``version: 1``)::

    network      NetworkConfig fields
    layers       list of {"rows", "cols", "weights" (row-major, rows*cols), "bias" (cols)}
    embeddings   null or {"rows", "cols", "values" (row-major)}
    scaling      {"v_mean", "v_std", "i_scale"}
    device_ids   original device labels, index = dense id
    train        TrainConfig fields
    log          list of [epoch, train_loss, holdout_loss]
    embedding_gaussian  null or {"mean", "cov" (row-major dim*dim)}

Floats are written with ``repr`` so a save/load round trip is bit-exact.
"""
import csv
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .embedding import EmbeddingGaussian
from .errors import DeviceLookupError, ModelFormatError, ParseError
from .mdn import NetworkConfig, NetworkParams
from .sweep import Waveform
from .train import Dataset, Scaling, TrainConfig, TrainedModel

__all__ = [
    "MODEL_FORMAT",
    "MODEL_VERSION",
    "load_measurements",
    "load_measurements_for_model",
    "save_measurements",
    "load_waveform",
    "write_csv",
    "read_csv_columns",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]

MODEL_FORMAT = "stochfet-model"
MODEL_VERSION = 1
MEASUREMENT_COLUMNS = ("device_id", "v_gate", "i_drain")


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, columns):
    """Write equal-length columns under ``header``; floats keep 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def read_csv_columns(path, required):
    """Read named columns as floats; raises ParseError with the 1-based line number."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"{path}:1: missing column(s) {', '.join(missing)}")
        pos = [header.index(c) for c in required]
        cols = [[] for _ in required]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for col, p, name in zip(cols, pos, required):
                try:
                    val = float(row[p])
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: {name} is not numeric: {row[p]!r}") from None
                if not math.isfinite(val):
                    raise ParseError(f"{path}:{lineno}: {name} is not finite")
                col.append(val)
    return [np.array(c) for c in cols], header


def _read_measurements(path):
    path = Path(path)
    (dev, v, i), _ = read_csv_columns(path, MEASUREMENT_COLUMNS)
    if dev.size == 0:
        raise ParseError(f"{path}: no data rows")
    bad = np.flatnonzero(dev != np.round(dev))
    if bad.size:
        raise ParseError(f"{path}:{bad[0] + 2}: device_id must be an integer")
    neg = np.flatnonzero(i < 0)
    if neg.size:
        raise ParseError(f"{path}:{neg[0] + 2}: negative drain current {i[neg[0]]!r}")
    return dev.astype(np.int64), v, i


def load_measurements(path):
    """Parse a ``device_id,v_gate,i_drain`` CSV; device ids are densified to 0..n-1.

    The original ids are kept in ``Dataset.device_labels``.
    """
    dev, v, i = _read_measurements(path)
    labels, dense = np.unique(dev, return_inverse=True)
    return Dataset.from_arrays(dense, v, i, device_count=labels.size, device_labels=labels)


def load_measurements_for_model(path, model):
    """Parse measurements using the model's device-id mapping and scaling."""
    dev, v, i = _read_measurements(path)
    if model.config.embedding_enabled:
        lookup = {int(lab): k for k, lab in enumerate(model.device_labels)}
        try:
            dense = np.array([lookup[int(d)] for d in dev], dtype=np.int64)
        except KeyError as exc:
            raise DeviceLookupError(f"device id {exc.args[0]} is not known to the model") from None
    else:
        dense = np.zeros(dev.size, dtype=np.int64)
    return Dataset(dense, v, i, max(model.device_count, 1), model.scaling, np.asarray(model.device_labels))


def save_measurements(dataset, path):
    labels = np.asarray(dataset.device_labels)[dataset.device_id]
    write_csv(path, MEASUREMENT_COLUMNS, [labels, dataset.v_gate, dataset.i_drain])


def load_waveform(path):
    (t, v), _ = read_csv_columns(path, ("time", "v_gate"))
    return Waveform(t, v)


def _floats(a):
    return [float(x) for x in np.asarray(a, dtype=float).reshape(-1)]


def model_to_dict(model):
    layers = [
        {"rows": int(w.shape[0]), "cols": int(w.shape[1]), "weights": _floats(w), "bias": _floats(b)}
        for w, b in zip(model.params.weights, model.params.biases)
    ]
    emb = None
    if model.embeddings is not None:
        emb = {
            "rows": int(model.embeddings.shape[0]),
            "cols": int(model.embeddings.shape[1]),
            "values": _floats(model.embeddings),
        }
    gauss = None
    if model.embedding_gaussian is not None:
        gauss = {"mean": _floats(model.embedding_gaussian.mean), "cov": _floats(model.embedding_gaussian.cov)}
    net = asdict(model.config)
    net["hidden_sizes"] = list(net["hidden_sizes"])
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "network": net,
        "layers": layers,
        "embeddings": emb,
        "scaling": asdict(model.scaling),
        "device_ids": [int(x) for x in model.device_labels],
        "train": asdict(model.train_config),
        "log": [[int(e), float(a), float(b)] for e, a, b in model.log],
        "embedding_gaussian": gauss,
    }


def _array(values, shape, what):
    arr = np.array(values, dtype=float)
    if arr.size != int(np.prod(shape)):
        raise ModelFormatError(f"{what}: expected {int(np.prod(shape))} values, found {arr.size}")
    return arr.reshape(shape)


def model_from_dict(d):
    if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a stochfet model file")
    if d.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model file version {d.get('version')!r}")
    try:
        cfg = NetworkConfig(**d["network"])
        sizes = cfg.layer_sizes
        layers = d["layers"]
        if len(layers) != len(sizes) - 1:
            raise ModelFormatError(f"expected {len(sizes) - 1} layers, found {len(layers)}")
        weights, biases = [], []
        for i, layer in enumerate(layers):
            shape = (sizes[i], sizes[i + 1])
            if (layer["rows"], layer["cols"]) != shape:
                raise ModelFormatError(
                    f"layer {i}: header says {layer['rows']}x{layer['cols']}, config implies {shape[0]}x{shape[1]}"
                )
            weights.append(_array(layer["weights"], shape, f"layer {i} weights"))
            biases.append(_array(layer["bias"], (shape[1],), f"layer {i} bias"))
        params = NetworkParams(cfg, weights, biases)

        labels = np.array(d["device_ids"], dtype=np.int64)
        table = None
        if cfg.embedding_enabled:
            emb = d["embeddings"]
            if emb is None:
                raise ModelFormatError("embeddings enabled but no embedding table stored")
            if emb["cols"] != cfg.embedding_dim or emb["rows"] != labels.size:
                raise ModelFormatError("embedding table dimensions disagree with config/device ids")
            table = _array(emb["values"], (emb["rows"], emb["cols"]), "embedding table")
        gauss = None
        if d.get("embedding_gaussian") is not None:
            g = d["embedding_gaussian"]
            mean = np.array(g["mean"], dtype=float)
            gauss = EmbeddingGaussian(mean, _array(g["cov"], (mean.size, mean.size), "embedding covariance"))
        return TrainedModel(
            config=cfg,
            params=params,
            embeddings=table,
            scaling=Scaling(**d["scaling"]),
            device_labels=labels,
            train_config=TrainConfig(**d.get("train", {})),
            log=[(int(e), float(a), float(b)) for e, a, b in d.get("log", [])],
            embedding_gaussian=gauss,
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc


def save_model(model, path):
    text = json.dumps(model_to_dict(model), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(d)
