"""Command-line interface: audit, bound, train, attack, prune, gen-data.

Every command takes --seed, --out and --format {json,csv}. Exit codes:
0 success, 2 validation error, 3 IO/format error. On failure a
machine-readable error object is written to --out when possible.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bounds as bounds_mod
from . import datasets as data_mod
from . import modelio
from . import pruning as pruning_mod
from .attacks import AttackConfig, evaluate_robustness, uae_fgsm
from .compressibility import default_k, profile
from .errors import ComprobeError, FormatError
from .linalg import frobenius_norm, op_norm_2, op_norm_inf
from .network import (
    AdversarialTraining,
    RegularizerSpec,
    TrainConfig,
    init_network,
    train,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=str, default=None, help="report path (stdout if omitted)")
    parser.add_argument("--format", choices=("json", "csv"), default="json")


def _emit(report: dict, args) -> None:
    if args.out:
        modelio.write_report(report, args.out, args.format)
    elif args.format == "json":
        sys.stdout.write(modelio.dumps_json(report))
    else:
        sys.stdout.write(modelio.report_to_csv(report))


def _load_data(path: str) -> data_mod.Dataset:
    return data_mod.load_dataset(path)


def _nan_reduce(op, values) -> float:
    finite = np.asarray(values)[np.isfinite(values)]
    return float(op(finite)) if finite.size else float("nan")


def _attack_config(args) -> AttackConfig:
    return AttackConfig(
        norm_kind=args.norm,
        delta=args.delta,
        steps=args.steps,
        step_size=args.step_size,
        restarts=args.restarts,
        seed=args.seed,
    )


def _cmd_gen_data(args) -> int:
    label_map = None
    if args.label_map:
        if args.label_map == "halves":
            label_map = data_mod.halves_label_map(args.classes)
        elif args.label_map == "parity":
            label_map = data_mod.parity_label_map(args.classes)
        else:
            label_map = {int(k): int(v) for k, v in json.loads(args.label_map).items()}
    spec = data_mod.DatasetSpec(
        source=args.source,
        n_samples=args.n,
        dimension=args.dim,
        n_classes=args.classes,
        noise=args.noise,
        separation=args.separation,
        seed=args.seed,
        label_map=label_map,
        images_path=args.images,
        labels_path=args.labels,
    )
    dataset = data_mod.generate_synthetic(spec)
    data_mod.save_dataset(dataset, args.data_out)
    report = {
        "kind": "gen-data",
        "seed": args.seed,
        "config_digest": modelio.config_digest(
            {
                "source": args.source,
                "n": args.n,
                "dim": args.dim,
                "classes": args.classes,
                "noise": args.noise,
                "separation": args.separation,
                "seed": args.seed,
            }
        ),
        "path": args.data_out,
        "n_samples": len(dataset),
        "dimension": int(dataset.x.shape[1]),
        "n_classes": dataset.n_classes,
    }
    _emit(report, args)
    return EXIT_OK


def _profile_dict(w, kind: str, k: int) -> dict:
    p = profile(w, kind, k)
    return {"q": p.q, "k": p.k, "epsilon": p.epsilon, "beta": p.beta}


def _cmd_audit(args) -> int:
    net, meta = modelio.load_model(args.model)
    rows = []
    for i, w in enumerate(net.layers, 1):
        h = min(w.shape)
        k = args.k or default_k(h)
        rows.append(
            {
                "layer": i,
                "frobenius": frobenius_norm(w),
                "opnorm_inf": op_norm_inf(w),
                "opnorm_2": op_norm_2(w),
                "row_profile": _profile_dict(w, "row", k),
                "spectral_profile": _profile_dict(w, "spectral", k),
                "within_row_profile": _profile_dict(w, "within-row", k),
                "opnorm_bound_inf": bounds_mod.bound_opnorm_inf(w, k, k),
                "opnorm_bound_2": bounds_mod.bound_opnorm_2(w, k),
            }
        )
    report = {
        "kind": "audit",
        "seed": args.seed,
        "model": args.model,
        "model_digest": meta.get("config_digest"),
        "config_digest": modelio.config_digest({"model": args.model, "k": args.k}),
        "per_layer": rows,
    }
    _emit(report, args)
    return EXIT_OK


def _bound_report_dict(report) -> dict:
    return {
        "norm_kind": report.norm_kind,
        "per_layer": [
            {
                "layer": lb.index,
                "opnorm_bound": lb.bound,
                "opnorm_actual": lb.actual,
                "epsilon": lb.epsilon,
                "beta": lb.beta,
                "k": lb.k,
            }
            for lb in report.per_layer
        ],
        "alignment_factors": [
            {
                "pair": i + 1,
                "value": f.value,
                "raw_max": f.raw_max,
                "remainder": f.remainder,
                "method": f.method,
                "evaluations": f.evaluations,
            }
            for i, f in enumerate(report.alignment_factors)
        ],
        "s_opt": sorted(report.s_opt),
        "alignment_product": report.alignment_product,
        "lipschitz_bound": report.lipschitz_bound,
        "risk_bound": report.risk_bound,
    }


def _cmd_bound(args) -> int:
    net, _ = modelio.load_model(args.model)
    search = bounds_mod.SearchConfig(
        exact_threshold=args.exact_threshold, restarts=args.restarts, seed=args.seed
    )
    builder = bounds_mod.lipschitz_bound_inf if args.norm == "inf" else bounds_mod.lipschitz_bound_2
    report = builder(net, args.k, search)
    risk = None
    if args.data:
        dataset = _load_data(args.data)
        risk = bounds_mod.adversarial_risk_bound(
            net, None, dataset.x, dataset.y, args.delta, args.norm, lipschitz_report=report
        )
    doc = {
        "kind": "bound",
        "seed": args.seed,
        "config_digest": modelio.config_digest(
            {"model": args.model, "norm": args.norm, "k": args.k, "delta": args.delta}
        ),
        "model": args.model,
        "delta": args.delta,
        **_bound_report_dict(report),
    }
    if risk is not None:
        doc["risk_bound"] = risk
    _emit(doc, args)
    return EXIT_OK


def _train_config_from_doc(doc: dict, seed: int) -> TrainConfig:
    regs = tuple(
        RegularizerSpec(
            kind=r["kind"],
            strength=float(r["strength"]),
            top_fraction=float(r.get("top_fraction", 0.05)),
        )
        for r in doc.get("regularizers", [])
    )
    adv = None
    if doc.get("adversarial"):
        a = doc["adversarial"]
        adv = AdversarialTraining(
            attack=AttackConfig(
                norm_kind=a["norm"],
                delta=float(a["delta"]),
                steps=int(a.get("steps", 10)),
                step_size=a.get("step_size"),
                restarts=int(a.get("restarts", 1)),
                seed=seed,
            ),
            ratio=float(a.get("ratio", 0.5)),
        )
    return TrainConfig(
        learning_rate=float(doc.get("learning_rate", 0.001)),
        weight_decay=float(doc.get("weight_decay", 0.01)),
        batch_size=int(doc.get("batch_size", 32)),
        max_epochs=int(doc.get("max_epochs", 100)),
        seed=seed,
        regularizers=regs,
        frobenius_targets=doc.get("frobenius_targets"),
        adversarial=adv,
        early_stopping_patience=int(doc.get("early_stopping_patience", 10)),
        validation_fraction=float(doc.get("validation_fraction", 0.05)),
        loss_kind=doc.get("loss_kind"),
    )


def _cmd_train(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    data_path = args.data or doc.get("data")
    if not data_path:
        raise FormatError("train needs --data or a 'data' entry in the config")
    dataset = _load_data(data_path)
    depth = int(doc.get("depth", 1))
    head_classes = int(doc.get("head_classes", dataset.n_classes))
    cfg = _train_config_from_doc(doc, args.seed)
    net = init_network(dataset.x.shape[1], depth, head_classes, seed=args.seed)
    net, history = train(net, dataset, cfg)
    digest = modelio.config_digest({"config": doc, "data": data_path, "seed": args.seed})
    modelio.save_model(net, args.model_out, {"seed": args.seed, "config_digest": digest})
    if args.history:
        modelio.history_to_csv(history, args.history)
    last = history[-1]
    report = {
        "kind": "train",
        "seed": args.seed,
        "config_digest": digest,
        "model": args.model_out,
        "epochs_run": len(history),
        "final": {
            "train_loss": last.train_loss,
            "val_loss": last.val_loss,
            "clean_acc": last.clean_acc,
            "eps_sigma": last.eps_sigma,
            "eps_nu": last.eps_nu,
        },
    }
    _emit(report, args)
    return EXIT_OK


def _cmd_attack(args) -> int:
    net, _ = modelio.load_model(args.model)
    dataset = _load_data(args.data)
    cfg = _attack_config(args)
    outcome = evaluate_robustness(net, dataset, cfg)
    report = {
        "kind": "attack",
        "seed": args.seed,
        "config_digest": modelio.config_digest(
            {
                "model": args.model,
                "data": args.data,
                "norm": args.norm,
                "delta": args.delta,
                "steps": args.steps,
                "restarts": args.restarts,
                "seed": args.seed,
            }
        ),
        "attack": {
            "label": "pgd-multi-restart-fgsm-warmstart",
            "norm_kind": args.norm,
            "delta": args.delta,
            "steps": args.steps,
            "step_size": cfg.resolved_step_size,
            "restarts": args.restarts,
        },
        "clean_accuracy": outcome.clean_accuracy,
        "robust_accuracy": outcome.robust_accuracy,
        "clean_loss": outcome.clean_loss,
        "adversarial_loss": outcome.adversarial_loss,
        "gap": outcome.gap,
        "secant_max": _nan_reduce(np.max, outcome.secants),
        "secant_mean": _nan_reduce(np.mean, outcome.secants),
        "amplification_mean": _nan_reduce(np.mean, outcome.amplification),
        "sv_topk_mass_mean": _nan_reduce(np.mean, outcome.sv_topk_mass),
    }
    if args.uae_epochs:
        uae = uae_fgsm(net, dataset, cfg, epochs=args.uae_epochs)
        report["uae"] = {
            "fooling_rate": uae.fooling_rate,
            "n_correct": uae.n_correct,
            "n_fooled": uae.n_fooled,
        }
    _emit(report, args)
    return EXIT_OK


def _cmd_prune(args) -> int:
    net, _ = modelio.load_model(args.model)
    ratios = [float(r) for r in args.ratios.split(",") if r]
    attack_cfg = None
    dataset = None
    if args.data:
        dataset = _load_data(args.data)
        if args.delta:
            attack_cfg = AttackConfig(
                norm_kind=args.norm, delta=args.delta, steps=args.steps,
                restarts=args.restarts, seed=args.seed,
            )
    plans = []
    curve = []
    for ratio in ratios:
        if args.method == "global":
            pruned_net, plan = pruning_mod.eps_targeted_global_prune(net, args.kind, ratio)
        else:
            pruned_net, plan = pruning_mod.layerwise_prune(net, args.kind, ratio)
        plans.append(plan)
        if dataset is not None:
            point = pruning_mod.retention_eval(net, [(pruned_net, plan)], dataset, attack_cfg)[0]
            curve.append(
                {
                    "ratio": point.ratio,
                    "clean_accuracy": point.clean_accuracy,
                    "robust_accuracy": point.robust_accuracy,
                }
            )
    report = {
        "kind": "prune",
        "seed": args.seed,
        "config_digest": modelio.config_digest(
            {"model": args.model, "kind": args.kind, "method": args.method, "ratios": ratios}
        ),
        "method": args.method,
        "prune_kind": args.kind,
        "plans": [
            {
                "target_ratio": p.target_value,
                "achieved_ratio": p.achieved_ratio,
                "selected_epsilon": p.selected_epsilon,
                "ratio_gap": p.ratio_gap,
                "per_layer_k": [int(p.per_layer_k[i]) for i in sorted(p.per_layer_k)],
            }
            for p in plans
        ],
        "curve": curve,
    }
    _emit(report, args)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comprobe",
        description="Compressibility audits, Lipschitz bounds, attacks and pruning for dense ReLU nets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate or import a dataset")
    p.add_argument("--source", choices=data_mod.SOURCES, required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--label-map", type=str, default=None,
                   help="'halves', 'parity', or a JSON object mapping labels")
    p.add_argument("--images", type=str, default=None, help="IDX images path")
    p.add_argument("--labels", type=str, default=None, help="IDX labels path")
    p.add_argument("--data-out", type=str, required=True, help="output .npz path")
    _add_common(p)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("audit", help="compressibility profiles and per-layer bounds")
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("bound", help="whole-network Lipschitz / risk bound")
    p.add_argument("--model", required=True)
    p.add_argument("--norm", choices=("inf", "two"), default="two")
    p.add_argument("--data", default=None, help="dataset for the risk bound")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--exact-threshold", type=int, default=14)
    p.add_argument("--restarts", type=int, default=16)
    _add_common(p)
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("train", help="train a network from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--data", default=None, help="dataset path (overrides config)")
    p.add_argument("--model-out", required=True)
    p.add_argument("--history", default=None, help="per-epoch CSV path")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("attack", help="PGD robustness evaluation")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--norm", choices=("inf", "two"), default="inf")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--steps", type=int, default=40)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--uae-epochs", type=int, default=0, help="also run the universal attack")
    _add_common(p)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("prune", help="pruning plans and retention curve")
    p.add_argument("--model", required=True)
    p.add_argument("--kind", choices=("row", "spectral"), required=True)
    p.add_argument("--method", choices=("global", "layerwise"), default="global")
    p.add_argument("--ratios", type=str, default="0.1,0.3,0.5,0.7,1.0")
    p.add_argument("--data", default=None)
    p.add_argument("--norm", choices=("inf", "two"), default="inf")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--restarts", type=int, default=2)
    _add_common(p)
    p.set_defaults(func=_cmd_prune)

    return parser


def _error_report(exc: Exception) -> dict:
    return {"error": {"type": type(exc).__name__, "message": str(exc)}}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (FormatError, OSError, json.JSONDecodeError) as exc:
        _try_emit_error(exc, args)
        return EXIT_IO
    except (ComprobeError, ValueError, KeyError) as exc:
        _try_emit_error(exc, args)
        return EXIT_VALIDATION


def _try_emit_error(exc: Exception, args) -> None:
    report = _error_report(exc)
    try:
        if getattr(args, "out", None):
            modelio.write_report(report, args.out, getattr(args, "format", "json"))
        else:
            sys.stderr.write(modelio.dumps_json(report))
    except Exception:
        sys.stderr.write(f"{type(exc).__name__}: {exc}\n")


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
