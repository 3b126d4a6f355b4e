"""Datasets, minibatch Adam training, gradient verification and evaluation metrics."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .crps import LOSSES, crps_batch
from . import _extended
from .errors import ConfigError, DeviceLookupError, MetricError, TrainingError
from .mdn import build_inputs, backward, forward_batch, init_params
from .truncated import truncated_mean_batch

log = logging.getLogger(__name__)

__all__ = [
    "DataPoint",
    "Scaling",
    "Dataset",
    "TrainConfig",
    "TrainedModel",
    "split_holdout",
    "loss_and_grads",
    "train",
    "gradient_check",
    "r2_score",
    "r_squared",
    "evaluate_crps",
    "predict_mixtures",
]


@dataclass(frozen=True)
class DataPoint:
    device_id: int
    v_gate: float
    i_drain: float


@dataclass(frozen=True)
class Scaling:
    """Gate voltage is standardised; current is divided by ``i_scale`` only, so I >= 0 maps to x >= 0."""

    v_mean: float
    v_std: float
    i_scale: float

    def __post_init__(self):
        if not self.v_std > 0 or not self.i_scale > 0:
            raise ConfigError("v_std and i_scale must be positive")

    def scale_v(self, v):
        return (np.asarray(v, dtype=float) - self.v_mean) / self.v_std

    def unscale_v(self, v):
        return np.asarray(v, dtype=float) * self.v_std + self.v_mean

    def scale_i(self, i):
        return np.asarray(i, dtype=float) / self.i_scale

    def unscale_i(self, i):
        return np.asarray(i, dtype=float) * self.i_scale

    @classmethod
    def fit(cls, v_gate, i_drain):
        v_std = float(np.std(v_gate))
        i_max = float(np.max(i_drain))
        return cls(float(np.mean(v_gate)), v_std if v_std > 0 else 1.0, i_max if i_max > 0 else 1.0)


@dataclass
class Dataset:
    """Column-oriented measurements with dense device ids ``0..device_count-1``.

    ``device_labels[i]`` is the original id of dense device ``i``.
    """

    device_id: np.ndarray
    v_gate: np.ndarray
    i_drain: np.ndarray
    device_count: int
    scaling: Scaling
    device_labels: np.ndarray = None

    def __post_init__(self):
        self.device_id = np.asarray(self.device_id, dtype=np.int64)
        self.v_gate = np.asarray(self.v_gate, dtype=float)
        self.i_drain = np.asarray(self.i_drain, dtype=float)
        if not (self.device_id.shape == self.v_gate.shape == self.i_drain.shape):
            raise ConfigError("dataset columns differ in length")
        if self.device_id.size and (
            self.device_id.min() < 0 or self.device_id.max() >= self.device_count
        ):
            raise ConfigError("device id outside 0..device_count-1")
        if np.any(self.i_drain < 0):
            raise ConfigError("negative drain current")
        if self.device_labels is None:
            self.device_labels = np.arange(self.device_count)

    @classmethod
    def from_arrays(cls, device_id, v_gate, i_drain, device_count=None, scaling=None, device_labels=None):
        device_id = np.asarray(device_id, dtype=np.int64)
        if device_count is None:
            device_count = int(device_id.max()) + 1 if device_id.size else 0
        if scaling is None:
            scaling = Scaling.fit(v_gate, i_drain)
        return cls(device_id, v_gate, i_drain, device_count, scaling, device_labels)

    @classmethod
    def from_points(cls, points, **kw):
        return cls.from_arrays(
            [p.device_id for p in points], [p.v_gate for p in points], [p.i_drain for p in points], **kw
        )

    def __len__(self):
        return self.device_id.size

    @property
    def points(self):
        return [DataPoint(int(d), float(v), float(i)) for d, v, i in zip(self.device_id, self.v_gate, self.i_drain)]

    def subset(self, index):
        return Dataset(
            self.device_id[index], self.v_gate[index], self.i_drain[index],
            self.device_count, self.scaling, self.device_labels,
        )

    def scaled(self):
        """(device ids, scaled gate voltage, scaled current)."""
        return self.device_id, self.scaling.scale_v(self.v_gate), self.scaling.scale_i(self.i_drain)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    loss: str = "crps"
    holdout: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not (self.learning_rate > 0 and 0 < self.beta1 < 1 and 0 < self.beta2 < 1 and self.epsilon > 0):
            raise ConfigError("optimizer settings out of range")
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}; choose one of {sorted(LOSSES)}")
        if not 0.0 <= self.holdout < 1.0:
            raise ConfigError("holdout fraction must lie in [0, 1)")


@dataclass
class TrainedModel:
    config: object
    params: object
    embeddings: np.ndarray
    scaling: Scaling
    device_labels: np.ndarray
    train_config: TrainConfig = field(default_factory=TrainConfig)
    log: list = field(default_factory=list)  # (epoch, train_loss, holdout_loss)
    embedding_gaussian: object = None

    @property
    def device_count(self):
        return len(self.device_labels)


def split_holdout(dataset, fraction, seed):
    """Per-device stratified split: each device contributes ``round(fraction * n_d)`` holdout points.

    Returns sorted ``(train_index, holdout_index)``.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    hold = []
    for d in range(dataset.device_count):
        idx = np.flatnonzero(dataset.device_id == d)
        n_hold = int(round(fraction * idx.size))
        if fraction > 0 and idx.size > 1:
            n_hold = min(max(n_hold, 1), idx.size - 1)
        hold.append(rng.permutation(idx)[:n_hold])
    hold = np.sort(np.concatenate(hold)) if hold else np.array([], dtype=np.int64)
    train = np.setdiff1d(np.arange(len(dataset)), hold)
    return train, hold.astype(np.int64)


def loss_and_grads(params, table, device_ids, v_scaled, y_scaled, loss="crps"):
    """Mean loss over a batch and its gradient w.r.t. every weight, bias and embedding entry.

    Returns ``(loss, grad_weights, grad_biases, grad_table)``; ``grad_table`` has the table's
    shape (``None`` without embeddings) and is zero in rows absent from the batch.
    """
    cfg = params.config
    inputs = build_inputs(cfg, table, device_ids, v_scaled)
    alpha, mu, sigma, cache = forward_batch(params, inputs)
    y = np.asarray(y_scaled, dtype=float).reshape(-1)
    n = y.size
    values, ga, gm, gs = LOSSES[loss](alpha, mu, sigma, y)
    gw, gb, g_in = backward(params, cache, ga / n, gm / n, gs / n)
    g_table = None
    if cfg.embedding_enabled:
        g_table = np.zeros_like(table)
        np.add.at(g_table, np.asarray(device_ids, dtype=np.int64).reshape(-1), g_in[:, 1:])
    return float(np.mean(values)), gw, gb, g_table


class _Adam:
    """Adam; embedding rows are updated lazily, only when their device is in the batch."""

    def __init__(self, arrays, table, cfg):
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        if table is not None:
            self.m_tab = np.zeros_like(table)
            self.v_tab = np.zeros_like(table)

    def step(self, arrays, grads, table=None, g_table=None, rows=None):
        c = self.cfg
        self.t += 1
        corr1 = 1.0 - c.beta1**self.t
        corr2 = 1.0 - c.beta2**self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            a -= c.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + c.epsilon)
        if table is not None:
            g = g_table[rows]
            m = self.m_tab[rows] * c.beta1 + (1.0 - c.beta1) * g
            v = self.v_tab[rows] * c.beta2 + (1.0 - c.beta2) * g * g
            self.m_tab[rows] = m
            self.v_tab[rows] = v
            table[rows] -= c.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + c.epsilon)


def _mean_loss(params, table, ids, v, y, loss, chunk=8192):
    if y.size == 0:
        return float("nan")
    total = 0.0
    for s in range(0, y.size, chunk):
        inputs = build_inputs(params.config, table, ids[s : s + chunk], v[s : s + chunk])
        alpha, mu, sigma, _ = forward_batch(params, inputs)
        total += float(np.sum(LOSSES[loss](alpha, mu, sigma, y[s : s + chunk])[0]))
    return total / y.size


def train(dataset, net_cfg, train_cfg=None, progress=None):
    """Fit network weights and device embeddings jointly with minibatch Adam.

    Log entry 0 holds the losses at initialisation; entry ``e`` the losses after epoch ``e``.
    ``progress``, if given, is called as ``progress(epoch, train_loss, holdout_loss)``.
    """
    train_cfg = train_cfg or TrainConfig()
    if len(dataset) == 0:
        raise ConfigError("cannot train on an empty dataset")
    if dataset.device_count < 1:
        raise ConfigError("dataset has no devices")

    params, table = init_params(net_cfg, dataset.device_count)
    ids, v, y = dataset.scaled()
    tr, ho = split_holdout(dataset, train_cfg.holdout, train_cfg.seed)
    rng = np.random.default_rng(train_cfg.seed)
    opt = _Adam(params.arrays(), table, train_cfg)
    loss_name = train_cfg.loss

    history = [(0, _mean_loss(params, table, ids[tr], v[tr], y[tr], loss_name),
                _mean_loss(params, table, ids[ho], v[ho], y[ho], loss_name))]
    if progress:
        progress(*history[-1])
    bs = train_cfg.batch_size
    for epoch in range(1, train_cfg.epochs + 1):
        order = tr[rng.permutation(tr.size)]
        running = 0.0
        for b, s in enumerate(range(0, order.size, bs)):
            batch = order[s : s + bs]
            value, gw, gb, g_tab = loss_and_grads(params, table, ids[batch], v[batch], y[batch], loss_name)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = [g for pair in zip(gw, gb) for g in pair]
            rows = np.unique(ids[batch]) if table is not None else None
            opt.step(params.arrays(), grads, table, g_tab, rows)
            running += value * batch.size
        history.append((epoch, running / order.size, _mean_loss(params, table, ids[ho], v[ho], y[ho], loss_name)))
        log.info("epoch %d train %.6g holdout %.6g", *history[-1])
        if progress:
            progress(*history[-1])

    return TrainedModel(
        config=net_cfg,
        params=params,
        embeddings=table,
        scaling=dataset.scaling,
        device_labels=np.asarray(dataset.device_labels),
        train_config=train_cfg,
        log=history,
    )


def _rel_errors(analytic, numeric, floor=1e-8):
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        return float("inf")
    a = np.abs(analytic)
    n = np.abs(numeric)
    big = np.maximum(a, n)
    mask = big > floor
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(analytic - numeric)[mask] / big[mask]))


def gradient_check(model, point, step=1e-6, loss="crps", return_details=False):
    """Largest relative gap between the analytic gradient and central differences.

    Every weight, bias and the embedding row of ``point.device_id`` is perturbed by
    ``+-step``; the loss on the difference side is evaluated in extended precision
    (``np.longdouble``) by an independent implementation, or with mpmath when the
    loss is so large that long-double cancellation would dominate the difference.
    Components where both gradients are below 1e-8 in magnitude are skipped.
    """
    if not step > 0:
        raise ConfigError("step must be positive")
    cfg = model.config
    table = model.embeddings
    ids = np.array([point.device_id])
    v = model.scaling.scale_v([point.v_gate])
    y = float(model.scaling.scale_i([point.i_drain])[0])
    _, gw, gb, g_tab = loss_and_grads(model.params, table, ids, v, [y], loss)

    ld = _extended.LD
    weights = [w.astype(ld) for w in model.params.weights]
    biases = [b.astype(ld) for b in model.params.biases]
    x = np.array([v[0]], dtype=ld)
    if cfg.embedding_enabled:
        if not 0 <= point.device_id < table.shape[0]:
            raise DeviceLookupError(f"unknown device id {point.device_id}")
        x = np.concatenate([x, table[point.device_id].astype(ld)])
    ref_loss = _extended.LOSSES[loss]

    def f():
        return ref_loss(*_extended.mixture(weights, biases, x, cfg.n_components, cfg.sigma_floor), y)

    grads = [gw[i // 2] if i % 2 == 0 else gb[i // 2] for i in range(2 * len(gw))]
    if cfg.embedding_enabled:
        grads.append(g_tab[point.device_id])
    value = abs(f())
    if value * np.finfo(ld).eps / step > 1e-11:
        # long-double cancellation in (up - down) would swamp small components
        numeric = _mp_differences(model, weights, biases, x, y, step, loss, value)
    else:
        targets = [a for pair in zip(weights, biases) for a in pair]
        if cfg.embedding_enabled:
            targets.append(x[1:])
        h = ld(step)
        numeric = []
        for arr in targets:
            flat = arr.reshape(-1)
            for j in range(flat.size):
                old = flat[j]
                flat[j] = old + h
                up = f()
                flat[j] = old - h
                down = f()
                flat[j] = old
                numeric.append(float((up - down) / (2 * h)))
        numeric = np.array(numeric)
    analytic = np.concatenate([g.reshape(-1) for g in grads])
    err = _rel_errors(analytic, numeric)
    if return_details:
        return err, analytic, numeric, g_tab
    return err


def _mp_differences(model, weights, biases, x, y, step, loss, value):
    import mpmath

    cfg = model.config
    dps = 30 + int(np.ceil(np.log10(max(value, 1.0))))
    with mpmath.workdps(dps):
        mpf = mpmath.mpf
        W = [[[mpf(float(c)) for c in row] for row in w.astype(float)] for w in weights]
        B = [[mpf(float(c)) for c in b.astype(float)] for b in biases]
        X = [mpf(float(c)) for c in x.astype(float)]
        Y, h, floor = mpf(y), mpf(step), mpf(cfg.sigma_floor)
        ref = _extended.MP_LOSSES[loss]

        def f():
            return ref(*_extended.mp_mixture(W, B, X, cfg.n_components, floor), Y)

        def diff(vec, j):
            old = vec[j]
            vec[j] = old + h
            up = f()
            vec[j] = old - h
            down = f()
            vec[j] = old
            return float((up - down) / (2 * h))

        out = []
        for w, b in zip(W, B):
            out += [diff(row, c) for row in w for c in range(len(row))]
            out += [diff(b, c) for c in range(len(b))]
        if cfg.embedding_enabled:
            out += [diff(X, c) for c in range(1, len(X))]
    return np.array(out)


def predict_mixtures(model, device_ids, v_gate):
    """(alpha, mu, sigma) in scaled current units for raw gate voltages."""
    inputs = build_inputs(model.config, model.embeddings, device_ids, model.scaling.scale_v(v_gate))
    alpha, mu, sigma, _ = forward_batch(model.params, inputs)
    return alpha, mu, sigma


def r2_score(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float)
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise MetricError("R^2 is undefined for targets with zero variance")
    return 1.0 - float(np.sum((y_true - np.asarray(y_pred, dtype=float)) ** 2)) / ss_tot


def r_squared(model, dataset):
    """R^2 in raw current units, predicting each point by its truncated-mixture mean."""
    if len(dataset) == 0:
        raise MetricError("empty dataset")
    alpha, mu, sigma = predict_mixtures(model, dataset.device_id, dataset.v_gate)
    pred = model.scaling.unscale_i(truncated_mean_batch(alpha, mu, sigma, strict=False))
    return r2_score(dataset.i_drain, pred)


def evaluate_crps(model, dataset):
    """Mean CRPS over the dataset, in scaled current units."""
    if len(dataset) == 0:
        raise MetricError("empty dataset")
    alpha, mu, sigma = predict_mixtures(model, dataset.device_id, dataset.v_gate)
    y = model.scaling.scale_i(dataset.i_drain)
    return float(np.mean(crps_batch(alpha, mu, sigma, y)[0]))
