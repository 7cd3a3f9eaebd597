"""Command-line interface.

Subcommands: ``attack``, ``eval``, ``train``, ``sigma-map``, ``project`` and
``gen-data``.  ``attack``/``eval``/``train`` read a JSON run configuration;
command-line flags override its values.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 attack or
training runtime error.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import plotting
from .cornersearch import CornerSearchConfig
from .data import DataFormatError, gen_synthetic_split
from .evaluation import VerificationError, evaluate_attack, make_attack, robust_accuracy_curve
from .formats import (
    load_dataset,
    load_model,
    read_image,
    read_tensor,
    save_dataset,
    save_model,
    write_png,
    write_tensor,
)
from .models import ReferenceModel
from .pgd import DEFAULT_ETA, PgdConfig
from .projections import ThreatModel
from .sigma import compute_sigma_map
from .training import TrainConfig, adversarial_train

log = logging.getLogger("sparseadv")

EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 1, 2, 3

METHODS = ("cornersearch", "sigma-cornersearch", "l0linf-cornersearch", "pgd0", "sigma-pgd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """JSON-backed run configuration; relative paths resolve against the file."""

    data: dict = field(default_factory=dict)
    train_data: dict = field(default_factory=dict)
    model: str | None = None
    method: str = "cornersearch"
    out: str = "out"
    seed: int = 0
    workers: int = 1
    batch_size: int = 256
    limit: int | None = None
    # attack parameters
    k: int = 10
    kmax: int = 10
    n: int = 100
    niter: int = 1000
    kappa: float = 0.4
    eps: float = 0.1
    eta: float = DEFAULT_ETA
    iters: int = 20
    restarts: int = 10
    # training parameters
    hidden: list = field(default_factory=lambda: [32])
    epochs: int = 30
    lr: float = 1e-2
    train_batch_size: int = 20
    optimizer: str = "adam"

    @classmethod
    def load(cls, path, overrides):
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise DataFormatError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON ({exc})") from None
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise DataFormatError(f"{path}: unknown config keys {sorted(unknown)}")
        base = path.parent
        if "out" in doc:
            doc["out"] = str(base / doc["out"])
        doc.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(**doc)
        for section in (cfg.data, cfg.train_data):
            for key in ("images", "labels"):
                if key in section:
                    section[key] = str(base / section[key])
        if cfg.model is not None:
            cfg.model = str(base / cfg.model)
        if not 0 <= int(cfg.seed) < 2**64:
            raise DataFormatError("seed must be a 64-bit unsigned integer")
        return cfg

    def dataset(self, key="data"):
        section = getattr(self, key)
        if "images" not in section or "labels" not in section:
            raise DataFormatError(f"config needs '{key}' with 'images' and 'labels' paths")
        for p in (section["images"], section["labels"]):
            if not Path(p).exists():
                raise DataFormatError(f"data file {p} not found")
        ds = load_dataset(section["images"], section["labels"], section.get("n_classes"))
        return ds.subset(self.limit) if self.limit else ds

    def load_model(self):
        if self.model is None or not Path(self.model).exists():
            raise DataFormatError(f"model file {self.model} not found")
        return load_model(self.model)

    def attack_config(self, method=None):
        method = method or self.method
        seed = int(self.seed)
        if method == "cornersearch":
            threat = ThreatModel("l0")
        elif method == "l0linf-cornersearch":
            threat = ThreatModel("l0_linf", eps=self.eps)
        elif method in ("sigma-cornersearch", "sigma-pgd"):
            threat = ThreatModel("sigma", kappa=self.kappa)
        elif method == "pgd0":
            threat = ThreatModel("l0")
        else:
            raise UsageError(f"unknown method {method!r}; expected one of {METHODS}")
        if method.endswith("cornersearch"):
            return CornerSearchConfig(threat, self.n, self.kmax, self.niter, seed, self.batch_size)
        return PgdConfig(self.k, self.eta, self.iters, self.restarts, threat, seed)


def _add_attack_flags(p):
    p.add_argument("--config", required=True)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--k", type=int)
    p.add_argument("--kmax", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--niter", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--limit", type=int)
    p.add_argument("--out")


def _overrides(args):
    keys = ("method", "k", "kmax", "n", "niter", "kappa", "eps", "eta", "iters", "restarts", "seed",
            "workers", "limit", "out", "epochs", "lr")
    return {k: getattr(args, k, None) for k in keys}


def cmd_attack(args):
    cfg = RunConfig.load(args.config, _overrides(args))
    dataset = cfg.dataset()
    model = cfg.load_model()
    attack_cfg = cfg.attack_config()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    report = evaluate_attack(dataset, model, make_attack(model, attack_cfg), attack_cfg.feasible, cfg.workers)
    report.write_csv(out / "results.csv")
    summary = report.summary() | {"method": cfg.method, "budget": attack_cfg.budget}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))

    examples = []
    for r in report.records:
        if not r.success:
            continue
        x = dataset.images[r.index]
        write_png(out / f"adv_{r.index:05d}.png", r.adversarial)
        write_tensor(out / f"perturbation_{r.index:05d}.spt", r.adversarial - x)
        examples.append((x, r.adversarial, f"#{r.index}: {r.clean_label}->{r.adversarial_label}, {r.pixels_changed}px"))
    plotting.plot_adversarial_examples(examples, out / "examples.png")
    plotting.plot_pixel_histogram([r.pixels_changed for r in report.records if r.success], out / "pixels_hist.png")
    print(json.dumps(summary))
    return 0


def cmd_eval(args):
    cfg = RunConfig.load(args.config, _overrides(args))
    try:
        k_list = [int(k) for k in args.curve.split(",") if k.strip()]
    except ValueError:
        raise UsageError(f"--curve expects comma-separated integers, got {args.curve!r}") from None
    if not k_list:
        raise UsageError("--curve needs at least one budget")
    dataset = cfg.dataset()
    model = cfg.load_model()
    template = cfg.attack_config()
    try:
        curve = robust_accuracy_curve(dataset, model, template, k_list, cfg.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "robust_accuracy.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "robust_accuracy"])
        writer.writerows(curve)
    plotting.plot_robust_accuracy({cfg.method: curve}, out / "robust_accuracy.png", title=cfg.method)
    for k, acc in curve:
        print(f"{k},{acc}")
    return 0


def cmd_train(args):
    cfg = RunConfig.load(args.config, _overrides(args))
    dataset = cfg.dataset("train_data" if cfg.train_data else "data")
    if args.mode == "plain":
        attack = None
    else:
        threat = ThreatModel("l0") if args.mode == "l0-at" else ThreatModel("sigma", kappa=cfg.kappa)
        attack = PgdConfig(cfg.k, cfg.eta, cfg.iters, 1, threat, int(cfg.seed))
    tcfg = TrainConfig(cfg.epochs, cfg.train_batch_size, cfg.lr, attack, cfg.optimizer, int(cfg.seed))
    model = ReferenceModel.mlp(dataset.shape, cfg.hidden, dataset.n_classes, seed=int(cfg.seed))
    model, metrics = adversarial_train(model, dataset, tcfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.json", model)
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "clean_accuracy", "loss"])
        writer.writerows((m.epoch, m.clean_accuracy, m.loss) for m in metrics)
    plotting.plot_training(metrics, out / "training.png")
    print(f"trained {args.mode} model: clean accuracy {metrics[-1].clean_accuracy:.4f}")
    return 0


def cmd_sigma_map(args):
    x = read_image(args.image)
    sigma = compute_sigma_map(x)
    out = Path(args.out)
    if out.suffix.lower() == ".png":
        peak = sigma.max()
        write_png(out, sigma / peak if peak > 0 else sigma)
    elif out.suffix.lower() == ".spt":
        write_tensor(out, sigma)
    else:
        raise UsageError("--out must end in .png or .spt")
    return 0


def cmd_project(args):
    x = read_image(args.x)
    y = read_tensor(args.y).astype(np.float64)
    if y.ndim == 2:
        y = y[..., None]
    if y.shape != x.shape:
        raise DataFormatError(f"y has shape {y.shape}, x has shape {x.shape}")
    mode = {"l0": "l0", "l0linf": "l0_linf", "sigma": "sigma"}[args.mode]
    try:
        threat = ThreatModel(mode, eps=args.eps, kappa=args.kappa)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sigma = compute_sigma_map(x) if threat.needs_sigma else None
    z = threat.project(y, x, args.k, sigma)
    write_tensor(args.out, z)
    return 0


def _parse_shape(text):
    try:
        shape = tuple(int(s) for s in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--shape expects HxWxC, got {text!r}") from None
    if len(shape) != 3:
        raise UsageError(f"--shape expects HxWxC, got {text!r}")
    return shape


def cmd_gen_data(args):
    shape = _parse_shape(args.shape)
    try:
        train, test = gen_synthetic_split(args.classes, args.per_class, args.test_per_class, shape, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_dataset(args.out, "train", train)
    save_dataset(args.out, "test", test)
    print(f"wrote {len(train)} train / {len(test)} test images to {args.out}")
    return 0


def build_parser():
    parser = _Parser(prog="sparseadv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("attack", help="attack every point of a dataset")
    _add_attack_flags(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("eval", help="robust accuracy curve over sparsity budgets")
    _add_attack_flags(p)
    p.add_argument("--curve", required=True, help="comma-separated budgets, e.g. 1,2,4")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="plain or adversarial training")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=("plain", "l0-at", "sigma-at"), default="plain")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sigma-map", help="compute the sigma-map of an image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sigma_map)

    p = sub.add_parser("project", help="project a tensor onto a sparse feasible set")
    p.add_argument("--mode", choices=("l0", "l0linf", "sigma"), required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("gen-data", help="generate a synthetic blob-image dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--test-per-class", type=int)
    p.add_argument("--shape", required=True, help="HxWxC, e.g. 8x8x1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "test_per_class", 0) is None:
        args.test_per_class = args.per_class
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sparseadv: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"sparseadv: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (VerificationError, RuntimeError, ValueError) as exc:
        print(f"sparseadv: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
