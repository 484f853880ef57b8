"""Experiment entry points and artifact emission.

Subcommands:
  run              --config <file> [--key value]...   one experiment
  compare          --configs <files...> [--out csv]   strategy / alpha grid
  dump-embeddings  --config <file> --checkpoint <dir> --out <file>
  gen-data         --config <file> --out <dir>

Config files are flat JSON key/value documents; `--key value` command-line
overrides win, unknown keys are errors, and FAPD_SEED (env) overrides the
seed. Progress goes to stderr; stdout stays empty; data lands in files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import federation as fed
from . import model as mdl
from .dataset import generate_synthetic, save_dataset
from .distill import LossWeights
from .errors import ConfigError, FapdError

# key -> (python type, default); None default means nullable
CONFIG_SCHEMA = {
    "strategy": (str, "fapd"),
    "fixed_k": (int, None),
    "num_clients": (int, 10),
    "clients_per_round": (int, 5),
    "rounds": (int, 100),
    "local_epochs": (int, 10),
    "batch_size": (int, 64),
    "lr": (float, 0.01),
    "momentum": (float, 0.9),
    "lambda_kd": (float, 0.5),
    "lambda_cl": (float, 0.5),
    "tau": (float, 0.04),
    "kd_direction": (str, "teacher_student"),
    "k0": (int, 8),
    "delta_k": (int, 5),
    "epsilon": (float, 0.005),
    "window": (int, 3),
    "alpha": (float, 0.5),
    "seed": (int, 0),
    "num_classes": (int, 10),
    "input_dim": (int, 16),
    "hidden_dim": (int, 64),
    "teacher_dim": (int, 32),
    "n_train": (int, 2000),
    "n_test": (int, 1000),
    "noise_sigma": (float, 2.0),
    "dataset_path": (str, None),
    "calibration_size": (int, None),
    "workers": (int, 1),
    "out_dir": (str, "out"),
}


@dataclasses.dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def federation_config(self) -> fed.FederationConfig:
        v = self.values
        try:
            return fed.FederationConfig(
                num_clients=v["num_clients"],
                clients_per_round=v["clients_per_round"],
                rounds=v["rounds"],
                local_epochs=v["local_epochs"],
                batch_size=v["batch_size"],
                lr=v["lr"],
                momentum=v["momentum"],
                weights=LossWeights(v["lambda_kd"], v["lambda_cl"], v["tau"]),
                kd_direction=v["kd_direction"],
                k0=v["k0"],
                delta_k=v["delta_k"],
                epsilon=v["epsilon"],
                window=v["window"],
                alpha=v["alpha"],
                seed=v["seed"],
                input_dim=v["input_dim"],
                hidden_dim=v["hidden_dim"],
                teacher_dim=v["teacher_dim"],
                num_classes=v["num_classes"],
                n_train=v["n_train"],
                n_test=v["n_test"],
                noise_sigma=v["noise_sigma"],
                dataset_path=v["dataset_path"],
                calibration_size=v["calibration_size"],
                workers=v["workers"],
            )
        except FapdError as exc:
            raise ConfigError(str(exc)) from exc

    def strategy(self) -> fed.Strategy:
        try:
            return fed.Strategy(kind=self.values["strategy"],
                                fixed_k=self.values["fixed_k"])
        except FapdError as exc:
            raise ConfigError(str(exc)) from exc


def _coerce(key: str, value, typ):
    if value is None:
        return None
    if isinstance(value, str) and typ is not str:
        if value.lower() in ("none", "null"):
            return None
        try:
            value = typ(value)
        except ValueError as exc:
            raise ConfigError(f"config key '{key}': cannot parse '{value}' as {typ.__name__}") from exc
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, typ) or isinstance(value, bool):
        raise ConfigError(f"config key '{key}': expected {typ.__name__}, got {value!r}")
    return value


def parse_config(path: str, overrides=None) -> RunConfig:
    """Load a flat JSON config; apply `--key value` overrides; validate."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")

    values = {}
    for key, (typ, default) in CONFIG_SCHEMA.items():
        values[key] = default
    for key, value in raw.items():
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config key '{key}'")
        values[key] = _coerce(key, value, CONFIG_SCHEMA[key][0])
    for key, value in (overrides or {}).items():
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config key '{key}'")
        values[key] = _coerce(key, value, CONFIG_SCHEMA[key][0])

    env_seed = os.environ.get("FAPD_SEED")
    if env_seed is not None:
        values["seed"] = _coerce("seed", env_seed, int)

    cfg = RunConfig(values=values)
    cfg.federation_config()  # validate constraints now, not at run time
    cfg.strategy()
    return cfg


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


METRICS_HEADER = "round,k,accuracy,loss_total,loss_ce,loss_kd,loss_cl,consensus,clients"


def write_metrics_csv(trace, path: str) -> None:
    lines = [METRICS_HEADER]
    for m in trace:
        lines.append(",".join([
            str(m.round), str(m.k), _fmt(m.accuracy), _fmt(m.loss_total),
            _fmt(m.loss_ce), _fmt(m.loss_kd), _fmt(m.loss_cl),
            "1" if m.consensus_triggered else "0",
            ";".join(str(c) for c in m.clients),
        ]))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def rounds_to_95pct(trace) -> int:
    final = trace[-1].accuracy
    for m in trace:
        if m.accuracy >= 0.95 * final:
            return m.round
    return trace[-1].round


def curriculum_completion_round(trace, teacher_dim: int, strategy: fed.Strategy) -> int:
    if not strategy.uses_controller:
        return -1
    for m in trace:
        if m.k == teacher_dim:
            return m.round
    return -1


def cmd_run(cfg: RunConfig) -> int:
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    config = cfg.federation_config()
    strategy = cfg.strategy()
    state = fed.prepare_state(config, strategy)
    trace = []
    for _ in range(config.rounds):
        state, m = fed.run_round(state)
        trace.append(m)
        print(
            f"round {m.round}: k={m.k} acc={m.accuracy:.4f} "
            f"loss={m.loss_total:.4f} consensus={int(m.consensus_triggered)}",
            file=sys.stderr,
        )

    write_metrics_csv(trace, os.path.join(out_dir, "metrics.csv"))
    mdl.save_checkpoint(state.model, os.path.join(out_dir, "checkpoint"))
    summary = {
        "strategy": strategy.kind,
        "alpha": config.alpha,
        "seed": config.seed,
        "rounds": config.rounds,
        "final_accuracy": trace[-1].accuracy,
        "final_k": trace[-1].k,
        "consensus_rounds": sum(1 for m in trace if m.consensus_triggered),
        "rounds_to_95pct_of_final": rounds_to_95pct(trace),
        "curriculum_completion_round": curriculum_completion_round(
            trace, config.teacher_dim, strategy
        ),
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return 0


COMPARE_FIXED_KEYS = [
    key for key in CONFIG_SCHEMA
    if key not in ("strategy", "fixed_k", "alpha", "out_dir")
]


def cmd_compare(config_paths, out_path: str) -> int:
    if len(config_paths) < 2:
        raise ConfigError("compare needs at least 2 configs")
    configs = [parse_config(p) for p in config_paths]
    base = configs[0]
    for other, path in zip(configs[1:], config_paths[1:]):
        diff = [k for k in COMPARE_FIXED_KEYS if other[k] != base[k]]
        if diff:
            raise ConfigError(
                f"compare configs may differ only in strategy/alpha; "
                f"{path} also differs in: {', '.join(diff)}"
            )

    rows = ["strategy,alpha,seed,final_accuracy,rounds_to_95pct,curriculum_completion_round"]
    for cfg, path in zip(configs, config_paths):
        config = cfg.federation_config()
        strategy = cfg.strategy()
        print(f"running {path} (strategy={strategy.kind}, alpha={config.alpha})",
              file=sys.stderr)
        trace, _ = fed.run_experiment(config, strategy)
        rows.append(",".join([
            strategy.kind, _fmt(config.alpha), str(config.seed),
            _fmt(trace[-1].accuracy), str(rounds_to_95pct(trace)),
            str(curriculum_completion_round(trace, config.teacher_dim, strategy)),
        ]))
    with open(out_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(rows) + "\n")
    return 0


def cmd_dump_embeddings(cfg: RunConfig, checkpoint: str, out_path: str) -> int:
    config = cfg.federation_config()
    student = mdl.load_checkpoint(checkpoint)
    if (student.input_dim, student.feature_dim, student.num_classes) != (
        config.input_dim, config.teacher_dim, config.num_classes
    ):
        raise ConfigError("checkpoint dimensions do not match config")
    _, test = generate_synthetic(
        config.num_classes, config.input_dim, config.teacher_dim,
        config.n_train, config.n_test, config.noise_sigma, config.seed,
    )
    _, ZS, _ = mdl.forward_batch(student, test.x)
    header = "label," + ",".join(f"f_{i}" for i in range(student.feature_dim))
    lines = [header]
    for label, row in zip(test.y, ZS):
        lines.append(str(int(label)) + "," + ",".join(repr(float(v)) for v in row))
    with open(out_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    return 0


def cmd_gen_data(cfg: RunConfig, out_dir: str) -> int:
    config = cfg.federation_config()
    train, test = generate_synthetic(
        config.num_classes, config.input_dim, config.teacher_dim,
        config.n_train, config.n_test, config.noise_sigma, config.seed,
    )
    save_dataset(train, os.path.join(out_dir, "train"))
    save_dataset(test, os.path.join(out_dir, "test"))
    print(f"wrote {len(train)} train / {len(test)} test samples to {out_dir}",
          file=sys.stderr)
    return 0


def _collect_overrides(pairs) -> dict:
    """['--lr', '0.1', '--strategy', 'fedavg'] -> {'lr': '0.1', ...}"""
    overrides = {}
    i = 0
    while i < len(pairs):
        key = pairs[i]
        if not key.startswith("--") or i + 1 >= len(pairs):
            raise ConfigError(f"expected --key value pairs, got {pairs[i:]}")
        overrides[key[2:]] = pairs[i + 1]
        i += 2
    return overrides


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fapd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True)

    p_cmp = sub.add_parser("compare", help="run several configs, emit compare.csv")
    p_cmp.add_argument("--configs", nargs="+", required=True)
    p_cmp.add_argument("--out", default="compare.csv")

    p_dump = sub.add_parser("dump-embeddings", help="dump test-set student features")
    p_dump.add_argument("--config", required=True)
    p_dump.add_argument("--checkpoint", required=True)
    p_dump.add_argument("--out", required=True)

    p_gen = sub.add_parser("gen-data", help="generate and save a synthetic dataset")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", required=True)

    args, extra = parser.parse_known_args(argv)
    try:
        if args.command == "run":
            return cmd_run(parse_config(args.config, _collect_overrides(extra)))
        if extra:
            raise ConfigError(f"unexpected arguments: {extra}")
        if args.command == "compare":
            return cmd_compare(args.configs, args.out)
        if args.command == "dump-embeddings":
            return cmd_dump_embeddings(parse_config(args.config), args.checkpoint, args.out)
        if args.command == "gen-data":
            return cmd_gen_data(parse_config(args.config), args.out)
        raise ConfigError(f"unknown command {args.command}")
    except FapdError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
