"""Quantile-coherent I-V simulation from a trained model.

A quantile q is held fixed along each monotone stretch of the gate drive and
redrawn only where the drive's slope changes sign, so a sweep traces one
smooth member of the predicted distribution instead of jumping around it.
All voltages and currents at this interface are in physical units.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .mdn import forward_batch
from .truncated import clip_quantile, inverse_cdf_batch, trunc_pdf_batch

__all__ = [
    "Waveform",
    "SweepTrace",
    "detect_q_events",
    "simulate_sweep",
    "quantile_trace",
    "predicted_pdf_average",
    "triangle_waveform",
]


@dataclass
class Waveform:
    time: np.ndarray
    v_gate: np.ndarray

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.v_gate = np.asarray(self.v_gate, dtype=float)
        if self.time.ndim != 1 or self.time.shape != self.v_gate.shape:
            raise ShapeError("time and v_gate must be 1-D arrays of equal length")
        if self.time.size < 2:
            raise ShapeError("a waveform needs at least two samples")
        if not (np.all(np.isfinite(self.time)) and np.all(np.isfinite(self.v_gate))):
            raise ShapeError("waveform values must be finite")
        if np.any(np.diff(self.time) <= 0):
            raise ShapeError("waveform time must be strictly increasing")

    def __len__(self):
        return self.time.size


@dataclass
class SweepTrace:
    time: np.ndarray
    v_gate: np.ndarray
    i_drain: np.ndarray
    q_used: np.ndarray


def triangle_waveform(v_low=0.0, v_high=1.8, n_half=31, period=1.0):
    """Up-then-down ramp with the apex at index ``n_half - 1``."""
    up = np.linspace(v_low, v_high, n_half)
    v = np.concatenate([up, up[-2::-1]])
    return Waveform(np.linspace(0.0, period, v.size), v)


def detect_q_events(w):
    """Indices where a new quantile is drawn: 0, plus every strict sign flip of the forward slope.

    Flat steps inherit the previous slope sign, so plateaus never trigger an event.
    """
    diffs = np.diff(w.v_gate)
    events = [0]
    prev = 0.0
    for i, d in enumerate(diffs):
        sign = np.sign(d)
        if sign == 0:
            continue
        if prev != 0 and sign != prev:
            events.append(i)
        prev = sign
    return events


def _mixtures(model, embedding, v_gate):
    cfg = model.config
    v = model.scaling.scale_v(v_gate).reshape(-1, 1)
    if cfg.embedding_enabled:
        e = np.asarray(embedding, dtype=float).reshape(-1)
        if e.size != cfg.embedding_dim:
            raise ShapeError(f"embedding has length {e.size}, expected {cfg.embedding_dim}")
        inputs = np.hstack([v, np.broadcast_to(e, (v.shape[0], e.size))])
    else:
        inputs = v
    alpha, mu, sigma, _ = forward_batch(model.params, inputs)
    return alpha, mu, sigma


def _currents(model, embedding, v_gate, q, strict):
    alpha, mu, sigma = _mixtures(model, embedding, v_gate)
    return model.scaling.unscale_i(inverse_cdf_batch(alpha, mu, sigma, q, strict=strict))


def quantile_trace(model, embedding, voltages, q, strict=False):
    """Current at a fixed quantile ``q`` for every gate voltage (amperes)."""
    voltages = np.asarray(voltages, dtype=float).reshape(-1)
    return _currents(model, embedding, voltages, np.full(voltages.size, float(q)), strict)


def simulate_sweep(model, embedding, w, rng, q_override=None, clip=(0.05, 0.95), strict=False):
    """Drive the model along waveform ``w``, redrawing q ~ U(0, 1) (clipped) at each q-event.

    ``q_override`` replaces every draw with a fixed value (still clipped). With ``strict``,
    degenerate mixture components raise, naming the offending sample index.
    """
    events = detect_q_events(w)
    q_used = np.empty(len(w))
    bounds = list(events) + [len(w)]
    for start, stop in zip(bounds[:-1], bounds[1:]):
        raw = rng.random() if q_override is None else q_override
        q_used[start:stop] = clip_quantile(raw, *clip)
    i_drain = _currents(model, embedding, w.v_gate, q_used, strict)
    return SweepTrace(w.time.copy(), w.v_gate.copy(), i_drain, q_used)


def predicted_pdf_average(model, embeddings, v_gate, x_grid, strict=False):
    """Mean truncated-mixture density (per ampere) over ``embeddings`` at one gate voltage."""
    x_grid = np.asarray(x_grid, dtype=float).reshape(-1)
    if x_grid.size == 0:
        raise ShapeError("empty current grid")
    cfg = model.config
    if cfg.embedding_enabled:
        emb = np.atleast_2d(np.asarray(embeddings, dtype=float))
        if emb.shape[0] == 0:
            raise ShapeError("no embeddings given")
        if emb.shape[1] != cfg.embedding_dim:
            raise ShapeError(f"embeddings have width {emb.shape[1]}, expected {cfg.embedding_dim}")
        inputs = np.hstack([np.full((emb.shape[0], 1), float(model.scaling.scale_v(v_gate))), emb])
    else:
        inputs = np.array([[float(model.scaling.scale_v(v_gate))]])
    alpha, mu, sigma, _ = forward_batch(model.params, inputs)
    scale = model.scaling.i_scale
    dens = trunc_pdf_batch(alpha, mu, sigma, x_grid / scale, strict=strict) / scale
    return dens.mean(axis=0)
