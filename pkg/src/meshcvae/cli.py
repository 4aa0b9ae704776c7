"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error. Every option can also be
given in a flat ``key = value`` file passed with ``--config``; keys use the
option's long name (``lr-decay`` and ``lr_decay`` are both accepted) and
command-line flags win over file values.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bench import benchmark
from .cluster import ClusterModel
from .errors import DataError, ParseError
from .meshio import read_mesh, write_mesh
from .metrics import evaluate, export_error_colormap
from .modelio import read_model, write_model
from .neural import TrainConfig
from .noise import NoiseSpec, add_gaussian_noise
from .pipeline import DenoiseConfig, TrainingSet, build_training_set, check_compatible, denoise, train_bundle

log = logging.getLogger("meshcvae")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- config file -------------------------------------------------------------


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {}
    for act in parser._actions:
        if act.dest in ("help", "config", "command"):
            continue
        actions[act.dest] = act
        for opt in act.option_strings:
            if opt.startswith("--"):
                actions[opt[2:].replace("-", "_")] = act
    for key, raw in values.items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r} for '{parser.prog}'")
        act = actions[key]
        try:
            if isinstance(act, argparse._StoreTrueAction):
                val = raw.lower() in ("1", "true", "yes", "on")
            elif act.nargs in ("+", "*") or isinstance(act.nargs, int):
                val = [act.type(x) if act.type else x for x in raw.replace(",", " ").split()]
            else:
                val = act.type(raw) if act.type else raw
        except (TypeError, ValueError):
            raise UsageError(f"bad value for config key {key!r}: {raw!r}") from None
        if act.choices is not None and val not in act.choices:
            raise UsageError(f"config key {key!r} must be one of {list(act.choices)}")
        # an option required on the command line may come from the file instead
        act.required = False
        parser.set_defaults(**{act.dest: val})


# --- parser ------------------------------------------------------------------


def _threads(s: str):
    if s == "all":
        return s
    v = int(s)
    if v < 1:
        raise ValueError
    return v


def _add_noise_opts(p):
    p.add_argument("--mu", type=float, default=0.0, help="mean offset in units of mean edge length")
    p.add_argument("--beta", type=float, default=0.1, help="std. deviation in units of mean edge length")
    p.add_argument("--seed", type=int, default=0)


def _add_filter_opts(p, defaults=True):
    d = DenoiseConfig()
    p.add_argument("--n-b", dest="N_B", type=int, default=d.N_B if defaults else None,
                   help="bilateral iterations")
    p.add_argument("--n-v", dest="N_V", type=int, default=d.N_V if defaults else None,
                   help="vertex-update iterations")
    p.add_argument("--sigma2", type=float, default=d.sigma2 if defaults else None)
    p.add_argument("--sigma1-mode", choices=("squared", "distance"),
                   default=d.sigma1_mode if defaults else None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meshcvae", description="CVAE-based triangle mesh denoising.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("add-noise", help="perturb vertices along their normals")
    p.add_argument("--config")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    _add_noise_opts(p)

    p = sub.add_parser("build-trainset", help="noisy/clean descriptor pairs and k-means labels")
    p.add_argument("--config")
    p.add_argument("--in", dest="input", nargs="+", required=True, help="clean meshes")
    p.add_argument("--out", required=True, help="output .npz")
    _add_noise_opts(p)
    p.add_argument("--n", type=int, default=20, help="patch size")
    p.add_argument("--K", type=int, default=200, help="number of clusters")
    p.add_argument("--kmeans-seed", type=int, default=0)
    p.add_argument("--kmeans-iter", type=int, default=100)
    p.add_argument("--a-c", dest="a_c", type=float, nargs=3, default=[0.0, 0.0, 1.0])
    p.add_argument("--no-twist", action="store_true",
                   help="align the mean normal only (no canonical spin about a_c)")

    t = TrainConfig()
    p = sub.add_parser("train", help="train a CVAE (or plain AE) on a training set")
    p.add_argument("--config")
    p.add_argument("--trainset", required=True)
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--kind", choices=("cvae", "ae"), default="cvae")
    p.add_argument("--epochs", type=int, default=t.epochs)
    p.add_argument("--lr", type=float, default=t.learning_rate)
    p.add_argument("--lr-decay", type=float, default=t.lr_decay)
    p.add_argument("--batch-size", type=int, default=t.batch_size)
    p.add_argument("--latent-dim", type=int, default=t.latent_dim)
    p.add_argument("--width", type=int, default=t.enc_widths[0], help="hidden width of all CVAE layers")
    p.add_argument("--keep-ratio", type=float, default=t.keep_ratio)
    p.add_argument("--activation", choices=("relu", "leaky"), default=t.activation)
    p.add_argument("--val-fraction", type=float, default=t.val_fraction)
    p.add_argument("--seed", type=int, default=t.seed)
    _add_filter_opts(p)

    p = sub.add_parser("denoise", help="denoise a mesh with a trained model")
    p.add_argument("--config")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None, help="must match the model")
    p.add_argument("--K", type=int, default=None, help="must match the model")
    _add_filter_opts(p, defaults=False)
    p.add_argument("--threads", type=_threads, default=1)

    p = sub.add_parser("eval", help="compare a reconstruction against ground truth")
    p.add_argument("--config")
    p.add_argument("--rec", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--colormap", help="write a COFF coloured by per-vertex distance")
    p.add_argument("--csv", help="write per-vertex distances as CSV")
    p.add_argument("--json", action="store_true", help="print metrics as JSON")

    p = sub.add_parser("bench", help="time the pipeline stages")
    p.add_argument("--config")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--thread-counts", type=int, nargs="+", default=[1])
    p.add_argument("--csv", help="write raw samples as CSV")
    _add_filter_opts(p, defaults=False)
    return parser


# --- commands ----------------------------------------------------------------


def _cmd_add_noise(a):
    mesh = read_mesh(a.input)
    write_mesh(add_gaussian_noise(mesh, NoiseSpec(a.mu, a.beta, a.seed)), a.out)


def _cmd_build_trainset(a):
    meshes = [read_mesh(p) for p in a.input]
    noise = NoiseSpec(a.mu, a.beta, a.seed)
    ts, km = build_training_set(meshes, noise, a.n, a.K, seed=a.kmeans_seed,
                                max_iter=a.kmeans_iter, a_c=np.asarray(a.a_c), twist=not a.no_twist)
    with open(a.out, "wb") as fh:
        np.savez(fh, x_noisy=ts.x_noisy, x_clean=ts.x_clean, labels=ts.labels, n=ts.n, twist=ts.twist,
                 centroids=km.centroids, kmeans_seed=km.seed, kmeans_iter=km.n_iter,
                 a_c=np.asarray(a.a_c, dtype=np.float64),
                 noise=json.dumps(asdict(noise)))
    print(f"{len(ts)} pairs, K={km.K}, n={ts.n}")


def load_trainset(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            ts = TrainingSet(z["x_noisy"], z["x_clean"], z["labels"], int(z["n"]), bool(z["twist"]))
            km = ClusterModel(z["centroids"], int(z["kmeans_seed"]), int(z["kmeans_iter"]))
            a_c = tuple(z["a_c"])
            noise = NoiseSpec(**json.loads(str(z["noise"])))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"not a training-set file: {exc}") from None
    return ts, km, a_c, noise


def _denoise_cfg(a, base: DenoiseConfig) -> DenoiseConfig:
    over = {k: getattr(a, k) for k in ("N_B", "N_V", "sigma2", "sigma1_mode", "n", "K", "threads")
            if getattr(a, k, None) is not None}
    return DenoiseConfig(**{**asdict(base), **over})


def _cmd_train(a):
    ts, km, a_c, noise = load_trainset(a.trainset)
    tc = TrainConfig(learning_rate=a.lr, lr_decay=a.lr_decay, batch_size=a.batch_size, epochs=a.epochs,
                     keep_ratio=a.keep_ratio, seed=a.seed, latent_dim=a.latent_dim,
                     enc_widths=(a.width, a.width), dec_widths=(a.width, a.width),
                     activation=a.activation, val_fraction=a.val_fraction)
    cfg = DenoiseConfig(n=ts.n, K=km.K, a_c=a_c, N_B=a.N_B, N_V=a.N_V, sigma2=a.sigma2,
                        sigma1_mode=a.sigma1_mode)
    bundle = train_bundle(ts, km, cfg, tc, a.kind, noise)
    write_model(bundle, a.out)
    print(f"final loss {bundle.provenance['final_loss']}")


def _cmd_denoise(a):
    bundle = read_model(a.model)
    cfg = _denoise_cfg(a, bundle.config)
    check_compatible(bundle, cfg)
    res = denoise(read_mesh(a.input), bundle, cfg)
    write_mesh(res.mesh, a.out)
    log.info("timings %s", res.timings)


def _cmd_eval(a):
    rec, ref = read_mesh(a.rec), read_mesh(a.ref)
    rep = evaluate(rec, ref)
    if a.json:
        print(json.dumps(rep.summary()))
    else:
        for k, v in rep.summary().items():
            print(f"{k} {v!r}")
    if a.colormap or a.csv:
        off, csv = export_error_colormap(rec, rep.per_vertex_distance)
        if a.colormap:
            Path(a.colormap).write_bytes(off)
        if a.csv:
            Path(a.csv).write_bytes(csv)


def _cmd_bench(a):
    bundle = read_model(a.model)
    cfg = _denoise_cfg(a, bundle.config)
    rep = benchmark(read_mesh(a.input), bundle, cfg, a.repetitions, a.thread_counts)
    print("\n".join(rep.summary_lines()))
    if a.csv:
        Path(a.csv).write_text(rep.to_csv())


COMMANDS = {
    "add-noise": _cmd_add_noise,
    "build-trainset": _cmd_build_trainset,
    "train": _cmd_train,
    "denoise": _cmd_denoise,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
}


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _parse(argv):
    parser = build_parser()
    command = next((t for t in argv if t in COMMANDS), None)
    path = _config_path(argv)
    if command is not None and path is not None:
        sub = parser._subparsers._group_actions[0].choices[command]
        _apply_config(sub, read_config(path))
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parse(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # invalid parameter combinations caught by config dataclasses
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
