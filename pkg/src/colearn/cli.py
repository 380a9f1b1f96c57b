"""Command-line surface for scripted experiments.

Subcommands: generate, train-source, adapt, evaluate, pseudolabels,
recommend. Every command writes its artifacts into an output directory
together with exactly one ``manifest.json`` recording the command, the
resolved configuration, input-file hashes, the seed and the tool version.
Failures exit nonzero with a machine-readable error JSON on stderr.

Engine flags can also come from a flat ``key=value`` config file
(``--config``); explicit flags override file values. The ``COLEARN_LOG``
environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .adaptation_model import SgdSchedule, forward, load_model, save_model
from .classifier_branch import (
    GuidanceMode,
    WEAK_ZS_TEMPERATURE,
    cosine_logits,
    zero_shot_centroids,
)
from .engine import (
    DEFAULT_CONF_THRESHOLD,
    DEFAULT_TEMPERATURE,
    EngineConfig,
    build_branch_pseudolabels,
    recommend_gamma,
    run_colearn,
    run_colearn_plus,
    select_guidance,
)
from .errors import ColearnError, ConfigError
from .feature_bank import FeatureBank, load_bank, rows_by_class, save_bank
from .metrics import evaluate
from .pseudolabeler import SchemeKind, pseudolabel_stats, save_pseudolabel_csv
from .report import render_training_curves, write_episode_csv, write_reports
from .synthetic import Scenario, ShiftSpec, generate, train_source

log = logging.getLogger("colearn")

MODE_COLEARN = "colearn"
MODE_PLUS_WEAK = "colearn++-weak"
MODE_PLUS_STRONG = "colearn++-strong"


def _configure_logging() -> None:
    level_name = os.environ.get("COLEARN_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: str, command: str, config: dict, inputs: list[str], seed) -> str:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {path: _sha256(path) for path in sorted(set(inputs))},
        "seed": seed,
        "version": __version__,
        "wall_clock": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key=value`` lines; '#' starts a comment; dashes normalize to
    underscores so file keys match flag names either way."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(
                    f"{path}:{lineno}: expected key=value, got {raw.strip()!r}"
                )
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


ENGINE_KEYS = {
    "mode": str,
    "scheme": str,
    "gamma": float,
    "alpha": float,
    "t": float,
    "t_tilde": str,
    "episodes": int,
    "batch_size": int,
    "lr": float,
    "lr_after_decay": float,
    "lr_decay_episode": int,
    "seed": int,
}


def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument(
        "--mode",
        choices=[MODE_COLEARN, MODE_PLUS_WEAK, MODE_PLUS_STRONG],
        help="branch variant (default colearn)",
    )
    parser.add_argument(
        "--scheme",
        choices=[kind.value for kind in SchemeKind],
        help="pseudolabel selection scheme (default per mode)",
    )
    parser.add_argument("--gamma", type=float, help="confidence threshold in (0,1)")
    parser.add_argument("--alpha", type=float, help="zero-shot blend weight (per mode)")
    parser.add_argument("--t", type=float, help="branch softmax temperature")
    parser.add_argument(
        "--t-tilde", dest="t_tilde", help="zero-shot temperature: 'auto' or a float"
    )
    parser.add_argument("--episodes", type=int, help="number of episodes")
    parser.add_argument("--batch-size", type=int, help="SGD batch size")
    parser.add_argument("--lr", type=float, help="initial learning rate")
    parser.add_argument("--lr-after-decay", type=float, help="learning rate after decay")
    parser.add_argument(
        "--lr-decay-episode", type=int, help="episode index at which lr decays"
    )
    parser.add_argument("--seed", type=int, help="run seed")


def _merged_engine_values(args) -> dict:
    """Config-file values overridden by explicit CLI flags, parsed per key."""
    raw = read_config_file(args.config) if args.config else {}
    unknown = set(raw) - set(ENGINE_KEYS)
    if unknown:
        raise ConfigError(
            "unknown config keys", violations=sorted(unknown)
        )
    values = {}
    for key, cast in ENGINE_KEYS.items():
        if key in raw:
            try:
                values[key] = cast(raw[key])
            except ValueError:
                raise ConfigError(f"config key {key}={raw[key]!r} is not a {cast.__name__}")
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return values


def engine_config_from_values(values: dict) -> EngineConfig:
    mode = values.get("mode", MODE_COLEARN)
    t_tilde = values.get("t_tilde")
    alpha = values.get("alpha")

    if mode == MODE_COLEARN:
        guidance = None
        if alpha is not None or t_tilde is not None:
            raise ConfigError(
                "invalid engine config",
                violations=["alpha and t-tilde apply only to colearn++ modes"],
            )
        default_scheme = SchemeKind.MATCH_OR_CONF
    elif mode == MODE_PLUS_WEAK:
        kwargs = {}
        if alpha is not None:
            kwargs["alpha"] = alpha
        zs_t = WEAK_ZS_TEMPERATURE if t_tilde is None else _parse_t_tilde(t_tilde)
        guidance = GuidanceMode(
            kind="weak", alpha=kwargs.get("alpha", 1.0), zs_temperature=zs_t
        )
        default_scheme = SchemeKind.MATCH_OR_CONF
    elif mode == MODE_PLUS_STRONG:
        zs_t = "auto" if t_tilde is None else _parse_t_tilde(t_tilde)
        guidance = GuidanceMode(
            kind="strong",
            alpha=0.5 if alpha is None else alpha,
            zs_temperature=zs_t,
        )
        default_scheme = SchemeKind.STRONG_GUIDANCE
    else:
        raise ConfigError(f"unknown mode {mode!r}")

    lr = values.get("lr", 0.01)
    schedule = SgdSchedule(
        lr_initial=lr,
        lr_after_decay=values.get("lr_after_decay", lr / 10.0),
        decay_episode=values.get("lr_decay_episode", 10),
        batch_size=values.get("batch_size", 50),
        episodes=values.get("episodes", 15),
    )
    scheme = SchemeKind(values["scheme"]) if "scheme" in values else default_scheme
    cfg = EngineConfig(
        conf_threshold=values.get("gamma", DEFAULT_CONF_THRESHOLD),
        temperature=values.get("t", DEFAULT_TEMPERATURE),
        guidance=guidance,
        scheme=scheme,
        schedule=schedule,
        seed=values.get("seed", 0),
    )
    cfg.check()
    return cfg


def _parse_t_tilde(raw) -> float | str:
    if isinstance(raw, (int, float)):
        return float(raw)
    if raw == "auto":
        return "auto"
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"t-tilde must be 'auto' or a float, got {raw!r}")


def config_snapshot(cfg: EngineConfig, mode: str) -> dict:
    guidance = None
    if cfg.guidance is not None:
        guidance = {
            "kind": cfg.guidance.kind,
            "alpha": cfg.guidance.alpha,
            "t_tilde": cfg.guidance.zs_temperature,
        }
    return {
        "mode": mode,
        "gamma": cfg.conf_threshold,
        "t": cfg.temperature,
        "guidance": guidance,
        "scheme": SchemeKind(cfg.scheme).value,
        "episodes": cfg.schedule.episodes,
        "batch_size": cfg.schedule.batch_size,
        "lr": cfg.schedule.lr_initial,
        "lr_after_decay": cfg.schedule.lr_after_decay,
        "lr_decay_episode": cfg.schedule.decay_episode,
        "seed": cfg.seed,
    }


def load_template_sets(path: str) -> list[np.ndarray]:
    """A labeled template bank file, or a directory of per-class banks in
    sorted filename order."""
    if os.path.isdir(path):
        files = sorted(
            os.path.join(path, name)
            for name in os.listdir(path)
            if name.endswith((".fbank", ".csv"))
        )
        if not files:
            raise ConfigError(f"{path}: no template bank files found")
        return [np.asarray(load_bank(f).features, dtype=np.float64) for f in files]
    return rows_by_class(load_bank(path))


def _ensure_out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def cmd_generate(args) -> int:
    spec_values = {}
    inputs = []
    if args.spec:
        with open(args.spec) as fh:
            spec_values = json.load(fh)
        inputs.append(args.spec)
    if args.scenario is not None:
        spec_values["scenario"] = args.scenario
    if args.seed is not None:
        spec_values["seed"] = args.seed
    try:
        spec = ShiftSpec.from_dict(spec_values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad shift spec: {exc}")
    bench = generate(spec)
    out = _ensure_out_dir(args.out)
    save_bank(bench.source, os.path.join(out, "source.fbank"))
    save_bank(bench.target_a, os.path.join(out, "target_a.fbank"))
    save_bank(bench.target_star, os.path.join(out, "target_star.fbank"))
    save_bank(bench.templates, os.path.join(out, "templates.fbank"))
    with open(os.path.join(out, "shift_spec.json"), "w") as fh:
        fh.write(spec.to_json())
    write_manifest(out, "generate", json.loads(spec.to_json()), inputs, spec.seed)
    log.info("generated benchmark into %s", out)
    return 0


def cmd_train_source(args) -> int:
    bank = load_bank(args.bank)
    schedule = SgdSchedule(
        lr_initial=args.lr,
        lr_after_decay=args.lr,
        decay_episode=args.lr_decay_episode,
        batch_size=args.batch_size,
        episodes=max(args.lr_decay_episode, 1),
    )
    model = train_source(
        bank,
        schedule=schedule,
        seed=args.seed,
        min_accuracy=args.min_accuracy,
        max_epochs=args.max_epochs,
        depth=args.depth,
        hidden=args.hidden,
    )
    out = _ensure_out_dir(args.out)
    save_model(model, os.path.join(out, "source_model.clmd"))
    config = {
        "lr": args.lr,
        "batch_size": args.batch_size,
        "min_accuracy": args.min_accuracy,
        "max_epochs": args.max_epochs,
        "depth": args.depth,
        "hidden": args.hidden,
    }
    write_manifest(out, "train-source", config, [args.bank], args.seed)
    log.info("source model written to %s", out)
    return 0


def _load_adapt_inputs(args):
    model = load_model(args.model)
    bank_a = load_bank(args.target_a)
    bank_star = load_bank(args.target_star)
    template_sets = None
    inputs = [args.model, args.target_a, args.target_star]
    if args.templates:
        template_sets = load_template_sets(args.templates)
        inputs.append(args.templates)
    return model, bank_a, bank_star, template_sets, inputs


def cmd_adapt(args) -> int:
    values = _merged_engine_values(args)
    mode = values.get("mode", MODE_COLEARN)
    cfg = engine_config_from_values(values)
    model, bank_a, bank_star, template_sets, inputs = _load_adapt_inputs(args)
    if mode == MODE_COLEARN:
        adapted, reports = run_colearn(model, bank_a, bank_star, cfg)
    else:
        if template_sets is None:
            raise ConfigError(f"mode {mode} requires --templates")
        adapted, reports = run_colearn_plus(model, bank_a, bank_star, template_sets, cfg)

    out = _ensure_out_dir(args.out)
    save_model(adapted, os.path.join(out, "adapted_model.clmd"))
    write_reports(reports, os.path.join(out, "reports.jsonl"))
    write_episode_csv(reports, os.path.join(out, "episodes.csv"))
    if not args.no_figures:
        render_training_curves(reports, out)

    metrics: dict = {"episodes": len(reports)}
    if reports:
        metrics["final"] = reports[-1].to_dict()
    if bank_a.labels is not None and np.any(bank_a.labeled_mask()):
        mask = bank_a.labeled_mask()
        truth = np.asarray(bank_a.labels)[mask]
        feats = np.asarray(bank_a.features, dtype=np.float64)[mask]
        _, probs = forward(adapted, feats)
        result = evaluate(np.argmax(probs, axis=1), truth, n_classes=adapted.n_classes)
        metrics["target_evaluation"] = result.to_dict()
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, sort_keys=True, indent=2)
        fh.write("\n")
    write_manifest(out, "adapt", config_snapshot(cfg, mode), inputs, cfg.seed)
    log.info("adaptation finished: %d episodes into %s", len(reports), out)
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    bank = load_bank(args.bank)
    if bank.labels is None or not np.any(bank.labeled_mask()):
        raise ConfigError("evaluate requires a labeled bank")
    mask = bank.labeled_mask()
    truth = np.asarray(bank.labels)[mask]
    feats = np.asarray(bank.features, dtype=np.float64)[mask]
    _, probs = forward(model, feats)
    preds = np.argmax(probs, axis=1)
    known_mask = None
    if args.known_classes:
        known = {int(v) for v in args.known_classes.split(",")}
        known_mask = np.isin(truth, sorted(known))
    report = evaluate(preds, truth, known_mask=known_mask, n_classes=model.n_classes)
    payload = report.to_json()
    sys.stdout.write(payload)
    if args.out:
        out = _ensure_out_dir(args.out)
        with open(os.path.join(out, "evaluation.json"), "w") as fh:
            fh.write(payload)
        write_manifest(
            out,
            "evaluate",
            {"known_classes": args.known_classes},
            [args.model, args.bank],
            None,
        )
    return 0


def cmd_pseudolabels(args) -> int:
    values = _merged_engine_values(args)
    mode = values.get("mode", MODE_COLEARN)
    cfg = engine_config_from_values(values)
    model, bank_a, bank_star, template_sets, inputs = _load_adapt_inputs(args)
    if mode != MODE_COLEARN and template_sets is None:
        raise ConfigError(f"mode {mode} requires --templates")
    pl = build_branch_pseudolabels(model, bank_a, bank_star, template_sets, cfg)
    out = _ensure_out_dir(args.out)
    save_pseudolabel_csv(pl, os.path.join(out, "pseudolabels.csv"))
    stats = pseudolabel_stats(
        pl, bank_a.n_samples, bank_a.labels if bank_a.labels is not None else None
    )
    summary = {
        "n_total": stats.n_total,
        "coverage": stats.coverage,
        "counts": stats.counts,
        "accuracy": stats.accuracy,
    }
    with open(os.path.join(out, "pseudolabel_stats.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    write_manifest(out, "pseudolabels", config_snapshot(cfg, mode), inputs, cfg.seed)
    return 0


def cmd_recommend(args) -> int:
    bank_a = load_bank(args.target_a)
    bank_star = load_bank(args.target_star)
    inputs = [args.target_a, args.target_star]
    template_sets = None
    if args.templates:
        template_sets = load_template_sets(args.templates)
        inputs.append(args.templates)

    if args.use_labels:
        if bank_star.labels is None or not np.all(bank_star.labeled_mask()):
            raise ConfigError("--use-labels requires fully labeled target banks")
        proxy = np.asarray(bank_star.labels, dtype=np.int64)
        proxy_source = "bank-labels"
    else:
        if template_sets is None:
            raise ConfigError("estimated mode requires --templates for zero-shot proxy labels")
        zs = zero_shot_centroids(template_sets)
        star_feats = np.asarray(bank_star.features, dtype=np.float64)
        proxy = np.argmax(cosine_logits(star_feats, zs), axis=1)
        proxy_source = "zero-shot"

    ratio, gamma = recommend_gamma(bank_a, bank_star, proxy, cutoff=args.ratio_cutoff)
    result = {
        "ratio": ratio,
        "gamma": gamma,
        "ratio_cutoff": args.ratio_cutoff,
        "proxy_labels": proxy_source,
        "guidance": None,
    }
    if template_sets is not None and bank_star.labels is not None and np.any(
        bank_star.labeled_mask()
    ):
        selection = select_guidance(
            bank_star,
            template_sets,
            k=args.shots,
            seeds=args.selection_seeds,
            per_class=args.per_class,
            seed=args.seed or 0,
        )
        result["guidance"] = selection.to_dict()
    payload = json.dumps(result, sort_keys=True, indent=2) + "\n"
    sys.stdout.write(payload)
    if args.out:
        out = _ensure_out_dir(args.out)
        with open(os.path.join(out, "recommend.json"), "w") as fh:
            fh.write(payload)
        write_manifest(
            out,
            "recommend",
            {"ratio_cutoff": args.ratio_cutoff, "shots": args.shots},
            inputs,
            args.seed,
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="colearn",
        description="Deterministic co-learning engine over embedding banks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic benchmark")
    p.add_argument("--spec", help="ShiftSpec JSON file")
    p.add_argument("--scenario", choices=[s.value for s in Scenario])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-source", help="fit the source model on a labeled bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=50)
    p.add_argument("--lr-decay-episode", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-accuracy", type=float, default=0.95)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--depth", type=int, choices=(1, 2), default=1)
    p.add_argument("--hidden", type=int, default=None)
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("adapt", help="run co-learning adaptation")
    p.add_argument("--model", required=True)
    p.add_argument("--target-a", required=True, help="target bank, source-extractor view")
    p.add_argument("--target-star", required=True, help="target bank, pre-trained view")
    p.add_argument("--templates", help="template bank file or per-class directory")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    _add_engine_flags(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("evaluate", help="score a model on a labeled bank")
    p.add_argument("--model", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--known-classes", help="comma list of known class indices for H-score")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pseudolabels", help="export the co-learned pseudolabel set")
    p.add_argument("--model", required=True)
    p.add_argument("--target-a", required=True)
    p.add_argument("--target-star", required=True)
    p.add_argument("--templates")
    p.add_argument("--out", required=True)
    _add_engine_flags(p)
    p.set_defaults(func=cmd_pseudolabels)

    p = sub.add_parser("recommend", help="recommend gamma and guidance strength")
    p.add_argument("--target-a", required=True)
    p.add_argument("--target-star", required=True)
    p.add_argument("--templates")
    p.add_argument("--use-labels", action="store_true", help="oracle mode: bank labels as proxy")
    p.add_argument("--ratio-cutoff", type=float, default=0.85)
    p.add_argument("--shots", type=int, default=3)
    p.add_argument("--selection-seeds", type=int, default=3)
    p.add_argument("--per-class", action="store_true", help="draw shots per class (macro tasks)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_recommend)

    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ColearnError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True) + "\n")
        return 2
    except FileNotFoundError as exc:
        payload = {"error": "FileNotFound", "message": str(exc)}
        sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
