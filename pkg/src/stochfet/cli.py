"""Command-line interface: ``stochfet <command> ...``.

Exit status is 0 on success, 2 for usage errors and 1 for any library or I/O error.
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io
from .embedding import fit_gaussian, pca_fit, pca_project, sample_embedding, structured_embeddings
from .errors import ConfigError, StochFetError
from .mdn import NetworkConfig, forward_batch
from .oracle import OracleConfig, generate_synthetic_dataset
from .sweep import Waveform, predicted_pdf_average, quantile_trace, simulate_sweep
from .train import TrainConfig, evaluate_crps, r_squared, train
from .truncated import inverse_cdf_batch

SEED_ENV = "STOCHFET_SEED"
TRACE_QUANTILES = (0.05, 0.5, 0.95)
CONFIG_SECTIONS = {"oracle": OracleConfig, "network": NetworkConfig, "train": TrainConfig}


def resolve_seed(cli_seed):
    """``--seed`` wins over ``STOCHFET_SEED``; ``None`` when neither is set."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def load_config(path):
    """Read a JSON file with optional ``oracle``, ``network`` and ``train`` sections."""
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    for name, section in raw.items():
        allowed = {f.name for f in fields(CONFIG_SECTIONS[name])}
        bad = set(section) - allowed
        if bad:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(bad))}")
    return raw


def _build(cls, overrides, **forced):
    kw = dict(overrides)
    kw.update({k: v for k, v in forced.items() if v is not None})
    if "hidden_sizes" in kw:
        kw["hidden_sizes"] = tuple(kw["hidden_sizes"])
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _float_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty voltage list")
    return vals


def _gaussian(model):
    if model.embeddings is None:
        raise ConfigError("model was trained without device embeddings")
    return model.embedding_gaussian or fit_gaussian(model.embeddings)


def _embedding_for(model, device):
    """Table row of ``device`` (original id), or the embedding mean; None without embeddings."""
    if not model.config.embedding_enabled:
        return None
    if device is None:
        return _gaussian(model).mean
    idx = np.flatnonzero(np.asarray(model.device_labels) == device)
    if idx.size == 0:
        raise ConfigError(f"device id {device} is not known to the model")
    return model.embeddings[idx[0]]


def _voltages(args):
    if args.points < 2:
        raise ConfigError("--points must be >= 2")
    return np.linspace(args.vmin, args.vmax, args.points)


def _out_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_synth(args, cfg, seed):
    ocfg = _build(OracleConfig, cfg.get("oracle", {}), seed=seed)
    data, _ = generate_synthetic_dataset(ocfg)
    io.save_measurements(data, args.output)
    print(f"wrote {len(data)} rows for {data.device_count} devices to {args.output}")


def cmd_train(args, cfg, seed):
    data = io.load_measurements(args.data)
    net = _build(
        NetworkConfig, cfg.get("network", {}), seed=seed,
        embedding_enabled=False if args.no_embedding else None,
    )
    tcfg = _build(TrainConfig, cfg.get("train", {}), seed=seed, epochs=args.epochs, loss=args.loss)

    def progress(epoch, tr, ho):
        logging.getLogger("stochfet").info("epoch %d: train %.6g holdout %.6g", epoch, tr, ho)

    model = train(data, net, tcfg, progress=progress)
    if model.embeddings is not None and model.embeddings.shape[0] >= 2:
        model.embedding_gaussian = fit_gaussian(model.embeddings)
    io.save_model(model, args.output)
    log_path = args.log or str(Path(args.output).with_suffix("")) + "_log.csv"
    epochs, tr, ho = zip(*model.log)
    io.write_csv(log_path, ("epoch", "train_loss", "holdout_loss"), [epochs, tr, ho])
    print(f"final train loss {tr[-1]:.6g}, holdout loss {ho[-1]:.6g}; model written to {args.output}")


def cmd_eval(args, cfg, seed):
    model = io.load_model(args.model)
    data = io.load_measurements_for_model(args.data, model)
    r2 = r_squared(model, data)
    crps = evaluate_crps(model, data)
    line = f"r2={r2!r} crps={crps!r}"
    print(line)
    if args.output:
        io.write_csv(args.output, ("r2", "crps"), [[r2], [crps]])


def cmd_quantiles(args, cfg, seed):
    model = io.load_model(args.model)
    emb = _embedding_for(model, args.device)
    v = _voltages(args)
    cols = [v] + [quantile_trace(model, emb, v, q) for q in TRACE_QUANTILES]
    io.write_csv(args.output, ["v_gate"] + [f"q{q:g}" for q in TRACE_QUANTILES], cols)
    print(f"wrote {len(TRACE_QUANTILES)} quantile traces to {args.output}")


def cmd_devices(args, cfg, seed):
    model = io.load_model(args.model)
    g = _gaussian(model)
    rng = np.random.default_rng(seed if seed is not None else 0)
    n_random = args.random if args.random is not None else (0 if args.structured else 5)
    devices = structured_embeddings(g, n_random, rng)
    if not args.structured:
        keep = [i for i, lab in enumerate(devices.labels) if lab.startswith("random_")]
        devices.labels = [devices.labels[i] for i in keep]
        devices.embeddings = devices.embeddings[keep]
    if len(devices) == 0:
        raise ConfigError("no devices requested; use --structured and/or --random N")
    out = _out_dir(args.out_dir)
    v = _voltages(args)
    ramp = Waveform(np.arange(v.size, dtype=float), v)
    labels, vg, cur, qs = [], [], [], []
    for label, emb in devices:
        trace = simulate_sweep(model, emb, ramp, rng)
        labels += [label] * v.size
        vg.append(trace.v_gate)
        cur.append(trace.i_drain)
        qs.append(trace.q_used)
    io.write_csv(out / "device_traces.csv", ("label", "v_gate", "i_drain", "q_used"),
                 [labels, np.concatenate(vg), np.concatenate(cur), np.concatenate(qs)])
    dim = devices.embeddings.shape[1]
    io.write_csv(out / "device_embeddings.csv", ["label"] + [f"e{k + 1}" for k in range(dim)],
                 [devices.labels] + [devices.embeddings[:, k] for k in range(dim)])
    print(f"wrote traces for {len(devices)} synthetic devices to {out}")


def cmd_sweep(args, cfg, seed):
    model = io.load_model(args.model)
    w = io.load_waveform(args.waveform)
    emb = _embedding_for(model, args.device)
    rng = np.random.default_rng(seed if seed is not None else 0)
    trace = simulate_sweep(model, emb, w, rng, q_override=args.q, strict=args.strict)
    io.write_csv(args.output, ("time", "v_gate", "i_drain", "q_used"),
                 [trace.time, trace.v_gate, trace.i_drain, trace.q_used])
    print(f"wrote {len(w)} samples to {args.output}")


def _pdf_grid(model, embeddings, vg, n_points):
    """Current grid covering the 0.01%..99.99% quantiles of every member, in amperes."""
    s = model.scaling
    n = 1 if embeddings is None else embeddings.shape[0]
    inputs = np.full((n, 1), float(s.scale_v(vg)))
    if embeddings is not None:
        inputs = np.hstack([inputs, embeddings])
    alpha, mu, sigma, _ = forward_batch(model.params, inputs)
    lo = inverse_cdf_batch(alpha, mu, sigma, np.full(n, 1e-4), strict=False).min()
    hi = inverse_cdf_batch(alpha, mu, sigma, np.full(n, 1 - 1e-4), strict=False).max()
    pad = 0.05 * (hi - lo)
    return np.linspace(max(0.0, lo - pad), hi + pad, n_points) * s.i_scale


def cmd_pdf(args, cfg, seed):
    model = io.load_model(args.model)
    if args.n < 1 or args.grid < 2:
        raise ConfigError("--n must be >= 1 and --grid >= 2")
    rng = np.random.default_rng(seed if seed is not None else 0)
    emb = sample_embedding(_gaussian(model), rng, size=args.n) if model.config.embedding_enabled else None
    out = _out_dir(args.out_dir)
    for vg in args.vg:
        x = _pdf_grid(model, emb, vg, args.grid)
        dens = predicted_pdf_average(model, emb, vg, x)
        path = out / f"pdf_vg{vg:g}.csv"
        io.write_csv(path, ("x", "density"), [x, dens])
    print(f"wrote {len(args.vg)} density files to {out}")


def cmd_pca(args, cfg, seed):
    model = io.load_model(args.model)
    if model.embeddings is None:
        raise ConfigError("model was trained without device embeddings")
    pca = pca_fit(model.embeddings, 2)
    proj = pca_project(pca, model.embeddings)
    io.write_csv(args.output, ("device_id", "pc1", "pc2"),
                 [np.asarray(model.device_labels), proj[:, 0], proj[:, 1]])
    ratio = ", ".join(f"{r:.3f}" for r in pca.explained_variance_ratio)
    print(f"explained variance ratio: {ratio}; wrote {args.output}")


def build_parser():
    p = argparse.ArgumentParser(prog="stochfet", description="Stochastic FeFET I-V modelling with mixture density networks.")
    p.add_argument("--seed", type=int, default=None, help=f"random seed (falls back to ${SEED_ENV})")
    p.add_argument("--config", default=None, help="JSON file with oracle/network/train sections")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    # the global flags are also accepted after the command name
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    s = sub.add_parser("synth", help="generate the synthetic oracle dataset")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train a model on a measurement CSV")
    s.add_argument("data")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--log", default=None, help="training-log CSV (default: <output>_log.csv)")
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--loss", choices=("crps", "gnll"), default=None)
    s.add_argument("--no-embedding", action="store_true", help="train the voltage-only baseline")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="held-out R^2 and mean CRPS")
    s.add_argument("model")
    s.add_argument("data")
    s.add_argument("-o", "--output", default=None, help="also write the metrics as CSV")
    s.set_defaults(func=cmd_eval)

    def grid_args(sp):
        sp.add_argument("--vmin", type=float, default=0.0)
        sp.add_argument("--vmax", type=float, default=1.8)
        sp.add_argument("--points", type=int, default=181)

    s = sub.add_parser("quantiles", help="q = 0.05 / 0.5 / 0.95 current traces")
    s.add_argument("model")
    s.add_argument("-o", "--output", default="quantiles.csv")
    s.add_argument("--device", type=int, default=None, help="device id (default: mean embedding)")
    grid_args(s)
    s.set_defaults(func=cmd_quantiles)

    s = sub.add_parser("devices", help="traces of synthetic devices drawn from the embedding Gaussian")
    s.add_argument("model")
    s.add_argument("--random", type=int, default=None, metavar="N")
    s.add_argument("--structured", action="store_true", help="include the mean and +-2 sd axis devices")
    s.add_argument("--out-dir", default=".")
    grid_args(s)
    s.set_defaults(func=cmd_devices)

    s = sub.add_parser("sweep", help="quantile-coherent simulation along a waveform")
    s.add_argument("model")
    s.add_argument("waveform")
    s.add_argument("-o", "--output", default="sweep.csv")
    s.add_argument("--device", type=int, default=None, help="device id (default: mean embedding)")
    s.add_argument("--q", type=float, default=None, help="force a fixed quantile")
    s.add_argument("--strict", action="store_true", help="fail on numerically degenerate components")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("pdf", help="densities averaged over sampled synthetic devices")
    s.add_argument("model")
    s.add_argument("--vg", type=_float_list, required=True, help="comma-separated gate voltages")
    s.add_argument("--n", type=int, default=500, help="number of sampled embeddings")
    s.add_argument("--grid", type=int, default=512, help="points in the current grid")
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_pdf)

    s = sub.add_parser("pca", help="2-D PCA projection of the device embeddings")
    s.add_argument("model")
    s.add_argument("-o", "--output", default="pca.csv")
    s.set_defaults(func=cmd_pca)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        seed = resolve_seed(args.seed)
        cfg = load_config(args.config)
        args.func(args, cfg, seed)
    except (StochFetError, OSError) as exc:
        print(f"stochfet {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
