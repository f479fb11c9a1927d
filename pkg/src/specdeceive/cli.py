"""Command-line front end.

Subcommands cover the full pipeline: ``gen-data`` writes a modulated frame
dataset, ``train-amc`` fits the eavesdropper classifier, ``train-amn`` fits a
perturbation network against a frozen classifier checkpoint, ``eval`` sweeps
BER/accuracy/spectral metrics over an SNR grid, and ``psd`` exports the
clean/perturbation/adversarial PSD traces. All metric outputs are CSV so any
plotting tool can consume them; only checkpoints are binary.

Exit codes are stable: 0 success, 2 validation error, 3 I/O or checkpoint
error, 4 numerical divergence.

Configs are flat ``key = value`` text files (``#`` comments allowed);
command-line flags override file values. The environment variable
``SPECDECEIVE_SEED`` supplies a default seed.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from .adversary import AmcModel, AmnModel, LossWeights
from .autodiff import NumericsError
from .harness import (
    DEFAULT_AMC_EPOCHS,
    DEFAULT_AMN_EPOCHS,
    TrainingConfig,
    evaluate,
    load_dataset,
    perturbation_psd_traces,
    save_dataset,
    train_amc,
    train_amn,
)
from .modem import SCHEMES
from .nn import CheckpointError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4

SEED_ENV_VAR = "SPECDECEIVE_SEED"

LOSS_FLAG_TO_KIND = {"power": "power", "mse-fft": "mse_fft", "huber-fft": "huber_fft"}

CONFIG_SCHEMA: dict[str, type] = {
    "scheme": str,
    "frames_per_epoch": int,
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "snr_lo_db": float,
    "snr_hi_db": float,
    "alpha": float,
    "beta": float,
    "gamma": float,
    "loss": str,
    "delta": float,
    "seed": int,
    "noiseless_eavesdropper": bool,
    "dataset_dir": str,
    "checkpoint_dir": str,
    "output_dir": str,
}


class ConfigError(ValueError):
    pass


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean value {raw!r}")


def parse_config_file(path) -> dict:
    """Parse a flat key = value config; unknown keys are rejected."""
    values: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in CONFIG_SCHEMA:
                raise ConfigError(
                    f"{path}:{lineno}: unknown config key {key!r}"
                )
            typ = CONFIG_SCHEMA[key]
            try:
                if typ is bool:
                    values[key] = _parse_bool(raw)
                else:
                    values[key] = typ(raw)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from exc


def _validate_scheme(scheme: str) -> str:
    scheme = scheme.lower()
    if scheme not in SCHEMES:
        raise ConfigError(
            f"unknown scheme {scheme!r}; valid schemes: {','.join(SCHEMES)}"
        )
    return scheme


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _merged_config(args, defaults: dict) -> dict:
    cfg = dict(defaults)
    if getattr(args, "config", None):
        cfg.update(parse_config_file(args.config))
    for key in CONFIG_SCHEMA:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            cfg[key] = flag
    return cfg


def _training_config(cfg: dict, weights: LossWeights | None = None) -> TrainingConfig:
    return TrainingConfig(
        scheme=_validate_scheme(cfg["scheme"]),
        frames_per_epoch=cfg["frames_per_epoch"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        snr_lo_db=cfg["snr_lo_db"],
        snr_hi_db=cfg["snr_hi_db"],
        weights=weights,
        seed=cfg["seed"],
        noiseless_eavesdropper=cfg["noiseless_eavesdropper"],
    )


def _base_defaults() -> dict:
    return {
        "scheme": "qpsk",
        "frames_per_epoch": 2000,
        "epochs": DEFAULT_AMN_EPOCHS,
        "batch_size": 32,
        "learning_rate": 1e-3,
        "snr_lo_db": 0.0,
        "snr_hi_db": 20.0,
        "alpha": 0.5,
        "beta": 0.2,
        "gamma": 0.3,
        "loss": "huber-fft",
        "delta": 1.0,
        "seed": _default_seed(),
        "noiseless_eavesdropper": False,
        "dataset_dir": "",
        "checkpoint_dir": "checkpoints",
        "output_dir": "outputs",
    }


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _write_history_csv(path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{row[h]:.10g}" if isinstance(row[h], float)
                              else str(row[h]) for h in header) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen_data(args) -> int:
    scheme = _validate_scheme(args.scheme)
    if args.frames <= 0:
        raise ConfigError("--frames must be positive")
    seed = args.seed if args.seed is not None else _default_seed()
    manifest = save_dataset(args.out, scheme, args.frames, seed)
    print(f"wrote {manifest['frames']} {scheme} frames to {args.out}")
    return EXIT_OK


def _cmd_train_amc(args) -> int:
    defaults = _base_defaults()
    defaults["epochs"] = DEFAULT_AMC_EPOCHS
    cfg = _merged_config(args, defaults)
    config = _training_config(cfg)
    data = None
    if cfg["dataset_dir"]:
        frames_list, labels_list = [], []
        for i, scheme in enumerate(SCHEMES):
            _, frames, _ = load_dataset(Path(cfg["dataset_dir"]) / scheme)
            frames_list.append(frames)
            labels_list.append(np.full(frames.shape[0], i, dtype=np.int64))
        data = (np.concatenate(frames_list), np.concatenate(labels_list))
    model, history = train_amc(config, data=data, log=print)
    ckpt_dir = Path(cfg["checkpoint_dir"])
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = Path(args.out) if args.out else ckpt_dir / "amc.ckpt"
    model.save(ckpt)
    _write_history_csv(out_dir / "amc_train_log.csv",
                       ["epoch", "loss", "val_accuracy"], history)
    print(f"wrote classifier checkpoint to {ckpt}")
    return EXIT_OK


def _cmd_train_amn(args) -> int:
    cfg = _merged_config(args, _base_defaults())
    loss_flag = cfg["loss"]
    if loss_flag not in LOSS_FLAG_TO_KIND:
        raise ConfigError(
            f"unknown loss {loss_flag!r}; valid: {','.join(LOSS_FLAG_TO_KIND)}"
        )
    try:
        weights = LossWeights(cfg["alpha"], cfg["beta"], cfg["gamma"],
                              LOSS_FLAG_TO_KIND[loss_flag], cfg["delta"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    config = _training_config(cfg, weights)
    amc_path = _require_file(args.amc, "classifier checkpoint")
    amc = AmcModel.load(amc_path)
    data = None
    if cfg["dataset_dir"]:
        bits, frames, _ = load_dataset(Path(cfg["dataset_dir"]) / config.scheme)
        data = (bits, frames)
    model, history = train_amn(config, amc, data=data, log=print)
    ckpt_dir = Path(cfg["checkpoint_dir"])
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = Path(args.out) if args.out else ckpt_dir / f"amn_{config.scheme}_{loss_flag}.ckpt"
    model.save(ckpt)
    _write_history_csv(
        out_dir / "amn_train_log.csv",
        ["epoch", "loss_total", "loss_adv", "loss_comm", "loss_third"],
        history,
    )
    print(f"wrote attack checkpoint to {ckpt}")
    return EXIT_OK


def _snr_grid(args) -> list[float]:
    if args.snr_step <= 0:
        raise ConfigError("--snr-step must be positive")
    if args.snr_max < args.snr_min:
        raise ConfigError("--snr-max must be >= --snr-min")
    grid = list(np.arange(args.snr_min, args.snr_max + 1e-9, args.snr_step))
    if not grid:
        raise ConfigError("empty SNR grid")
    return [float(s) for s in grid]


def _cmd_eval(args) -> int:
    scheme = _validate_scheme(args.scheme)
    seed = args.seed if args.seed is not None else _default_seed()
    amc = AmcModel.load(_require_file(args.amc, "classifier checkpoint"))
    amn = None
    hashes = {"amc_sha256": _sha256(args.amc)}
    if args.amn:
        amn = AmnModel.load(_require_file(args.amn, "attack checkpoint"))
        hashes["amn_sha256"] = _sha256(args.amn)
    report = evaluate(
        amn, amc, scheme, _snr_grid(args),
        n_acc_frames=args.frames, min_ber_bits=args.bits, seed=seed,
    )
    report.write_csv(args.out)
    meta = dict(report.metadata)
    meta.update(hashes)
    meta.update({
        "snr_min": args.snr_min, "snr_max": args.snr_max, "snr_step": args.snr_step,
    })
    object.__setattr__(report, "metadata", meta)
    report.write_metadata(str(args.out) + ".meta")
    print(f"wrote {len(report.rows)} evaluation rows to {args.out}")
    return EXIT_OK


def _cmd_psd(args) -> int:
    scheme = _validate_scheme(args.scheme)
    seed = args.seed if args.seed is not None else _default_seed()
    amn = None
    if args.amn:
        amn = AmnModel.load(_require_file(args.amn, "attack checkpoint"))
    traces = perturbation_psd_traces(amn, scheme, n_frames=args.frames, seed=seed,
                                     nfft=args.nfft)
    traces.write_csv(args.out)
    print(f"wrote PSD traces to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specdeceive",
        description="Train and evaluate spectrally deceptive evasion attacks "
                    "on RF modulation classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a modulated frame dataset")
    p.add_argument("--scheme", required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train-amc", help="train the eavesdropper classifier")
    p.add_argument("--config", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--frames-per-epoch", dest="frames_per_epoch", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="checkpoint path override")
    p.set_defaults(func=_cmd_train_amc)

    p = sub.add_parser("train-amn", help="train a perturbation network")
    p.add_argument("--config", required=True)
    p.add_argument("--amc", required=True, help="frozen classifier checkpoint")
    p.add_argument("--loss", choices=sorted(LOSS_FLAG_TO_KIND), default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--scheme", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--frames-per-epoch", dest="frames_per_epoch", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="checkpoint path override")
    p.set_defaults(func=_cmd_train_amn)

    p = sub.add_parser("eval", help="sweep BER/accuracy/spectral metrics over SNR")
    p.add_argument("--amn", default=None, help="attack checkpoint (omit for clean baseline)")
    p.add_argument("--amc", required=True)
    p.add_argument("--scheme", default="qpsk")
    p.add_argument("--snr-min", type=float, default=0.0)
    p.add_argument("--snr-max", type=float, default=20.0)
    p.add_argument("--snr-step", type=float, default=2.0)
    p.add_argument("--frames", type=int, default=1000, help="accuracy frames per point")
    p.add_argument("--bits", type=int, default=100_000, help="minimum BER bits per point")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("psd", help="export clean/perturbation/adversarial PSD traces")
    p.add_argument("--amn", default=None, help="attack checkpoint (omit for null attack)")
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--scheme", default="qpsk")
    p.add_argument("--nfft", type=int, default=256)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_psd)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericsError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (CheckpointError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
