"""Command-line driver for the reconstruction pipeline.

Commands: gen-data, fit-tdd, reconstruct, evaluate, ablate, serve.
Exit codes: 0 success, 2 usage, 3 data/validation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adaptation import AdaptationConfig, adapt_face
from .dataset import (
    DepthSpec,
    generate_pairs,
    kfold_split,
    list_pair_ids,
    load_pair,
    load_split,
    save_pair,
    save_split,
)
from .errors import CranioforgeError, InvalidInputError
from .facemodel import build_synthetic_model, load_model, sample_prior, save_model
from .landmarks import default_schema, extend_landmarks, load_skull_landmarks
from .metrics import EvalReport, evaluate_set, format_table, nme
from .mesh import write_obj
from .tdd import (
    TissueDepthVector,
    fit_tdd_global,
    fit_tdd_regional,
    load_partition_file,
    load_tdd_global,
    representative_depths,
    sample_global,
    save_tdd,
)

MANIFEST_NAME = "run_manifest.json"


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                    inputs: dict, outputs: list[str], started: float) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": {k: v for k, v in vars(args).items() if k != "func"},
        "inputs": inputs,
        "outputs": outputs,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "duration_s": round(time.time() - started, 3),
    }
    _dump_json(manifest, out_dir / MANIFEST_NAME)


def _data_root(args) -> Path:
    if args.data:
        return Path(args.data)
    env = os.environ.get("CRANIOFORGE_DATA")
    if env:
        return Path(env)
    raise InvalidInputError("no data root: pass --data or set CRANIOFORGE_DATA")


def _load_adaptation_config(args) -> AdaptationConfig:
    if getattr(args, "config", None):
        return AdaptationConfig.from_file(args.config)
    return AdaptationConfig()


def cmd_gen_data(args) -> int:
    started = time.time()
    out = Path(args.out)
    model = build_synthetic_model(seed=args.model_seed, k=args.model_k)
    spec = DepthSpec(c_std=args.c_std, noise_std=args.noise_std,
                     latent_std=args.latent_std)
    pairs = generate_pairs(model, args.count, seed=args.seed, depth_spec=spec)

    save_model(model, out / "model")
    for pair in pairs:
        save_pair(pair, out / "pairs")
    # paper-style half/half train-test split plus k folds for cross-validation
    ids = [p.id for p in pairs]
    halves = kfold_split(ids, 2, seed=args.seed)
    folds = kfold_split(ids, args.folds, seed=args.seed)
    from .dataset import DatasetSplit

    split = DatasetSplit(train=halves.train, test=halves.test, folds=folds.folds)
    save_split(split, out / "split.json")

    outputs = ["model/", "pairs/", "split.json"]
    _write_manifest(out, "gen-data", args, {}, outputs, started)
    print(f"wrote {len(pairs)} pairs, model (K={model.k}), and split to {out}")
    return 0


def cmd_fit_tdd(args) -> int:
    started = time.time()
    root = _data_root(args)
    out = Path(args.out) if args.out else root / "tdd"
    schema = default_schema()

    split_path = root / "split.json"
    if split_path.exists() and not args.all_pairs:
        train_ids = list(load_split(split_path).train)
    else:
        train_ids = list_pair_ids(root / "pairs")
    if not train_ids:
        raise InvalidInputError(f"no training pairs found under {root}")
    depths = [load_pair(root / "pairs", pid).gt_depths for pid in train_ids]

    tdd = fit_tdd_global(depths)
    if args.partition:
        partition = load_partition_file(args.partition, len(schema))
    else:
        partition = schema.partition()
    regional = fit_tdd_regional(depths, partition)
    thin, normal, fat = representative_depths(tdd, depths)

    out.mkdir(parents=True, exist_ok=True)
    save_tdd(tdd, out / "tdd_global.json")
    save_tdd(regional, out / "tdd_regional.json")
    _dump_json(
        {"thin": thin.depths.tolist(), "normal": normal.depths.tolist(),
         "fat": fat.depths.tolist()},
        out / "representatives.json",
    )

    ratios = tdd.variance_ratios
    print(f"fitted tissue-depth models on {len(depths)} samples")
    print("variance ratios (first 5): "
          + "  ".join(f"{r:.3f}" for r in ratios[:5]))
    print(f"first-component share: {tdd.variance_ratio(1):.1%}")
    _write_manifest(out, "fit-tdd", args,
                    {"train_ids": train_ids},
                    ["tdd_global.json", "tdd_regional.json", "representatives.json"],
                    started)
    return 0


def _depths_for_mode(mode: str, tdd, tdd_dir: Path):
    """Depth vectors to try for a reconstruction mode, keyed by label."""
    reps = {}
    reps_path = tdd_dir / "representatives.json"
    if reps_path.exists():
        blob = json.loads(reps_path.read_text(encoding="utf-8"))
        reps = {k: TissueDepthVector(np.asarray(v)) for k, v in blob.items()}
    if mode == "avg":
        return {"avg": sample_global(tdd, 0.0)}
    if mode in ("thin", "normal", "fat"):
        if mode not in reps:
            raise InvalidInputError(
                f"mode {mode!r} needs {reps_path}; run fit-tdd first"
            )
        return {mode: reps[mode]}
    if mode == "best":
        candidates = {"avg": sample_global(tdd, 0.0)}
        candidates.update(reps)
        return candidates
    if mode.startswith("c="):
        c = float(mode[2:])
        return {mode: sample_global(tdd, c)}
    raise ValueError(f"unknown tissue mode {mode!r}")


def _reconstruct_one(model, tdd, tdd_dir, skull, pairing, config, mode, seed,
                     attributes, gt_mesh=None):
    """Run the landmark pipeline for each candidate depth set; pick the best."""
    f_init = sample_prior(model, seed=seed, attributes=attributes)
    runs = {}
    for label, depths in _depths_for_mode(mode, tdd, tdd_dir).items():
        targets = extend_landmarks(skull, depths)
        result = adapt_face(model, f_init, targets, pairing, config)
        mesh = result.mesh_in_target_frame()
        score = (nme(mesh, gt_mesh, 200.0) if gt_mesh is not None
                 else result.loss_history[-1, 0])
        runs[label] = (score, result, mesh)
    best_label = min(runs, key=lambda k: (runs[k][0], k))
    return best_label, runs


def cmd_reconstruct(args) -> int:
    started = time.time()
    root = _data_root(args)
    out = Path(args.out)
    schema = default_schema()
    pairing = schema.pairing()
    model = load_model(root / "model")
    tdd_dir = root / "tdd"
    tdd = load_tdd_global(tdd_dir / "tdd_global.json")
    config = _load_adaptation_config(args)
    attributes = json.loads(args.attributes) if args.attributes else {}

    gt_mesh = None
    if args.pair_id:
        pair = load_pair(root / "pairs", args.pair_id)
        skull = pair.skull_landmarks
        if not args.no_gt:
            gt_mesh = pair.face_mesh
    elif args.skull:
        skull = load_skull_landmarks(args.skull)
    else:
        raise InvalidInputError("reconstruct needs --pair-id or --skull")

    try:
        best_label, runs = _reconstruct_one(
            model, tdd, tdd_dir, skull, pairing, config, args.mode, args.seed,
            attributes, gt_mesh,
        )
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    score, result, mesh = runs[best_label]

    out.mkdir(parents=True, exist_ok=True)
    write_obj(mesh, out / "face.obj")
    diagnostics = result.diagnostics_json()
    diagnostics["mode"] = args.mode
    diagnostics["selected"] = best_label
    diagnostics["candidates"] = {
        label: {"score": float(s), "final_loss": float(r.loss_history[-1, 0]),
                "mean_residual_mm": float(r.landmark_residuals.mean())}
        for label, (s, r, _) in runs.items()
    }
    if gt_mesh is not None:
        diagnostics["nme"] = float(score)
    _dump_json(diagnostics, out / "diagnostics.json")
    _write_manifest(out, "reconstruct", args,
                    {"pair_id": args.pair_id, "skull": args.skull},
                    ["face.obj", "diagnostics.json"], started)
    mean_res = result.landmark_residuals.mean()
    print(f"reconstructed with mode={args.mode} (selected {best_label}); "
          f"mean landmark residual {mean_res:.3f} mm")
    if gt_mesh is not None:
        print(f"NME vs ground truth: {100 * score:.3f}%")
    return 0


def cmd_evaluate(args) -> int:
    started = time.time()
    root = _data_root(args)
    out = Path(args.out)
    schema = default_schema()
    pairing = schema.pairing()
    model = load_model(root / "model")
    config = _load_adaptation_config(args)
    split = load_split(root / "split.json")
    pairs = {pid: load_pair(root / "pairs", pid)
             for fold in split.folds for pid in fold}

    fold_means = []
    all_nme: dict[str, float] = {}
    for fold_idx, fold in enumerate(split.folds):
        train_ids = [pid for other in split.folds if other != fold for pid in other]
        depths = [pairs[pid].gt_depths for pid in train_ids]
        tdd = fit_tdd_global(depths)
        results = {}
        for j, pid in enumerate(fold):
            pair = pairs[pid]
            f_init = sample_prior(model, seed=args.seed + j)
            targets = extend_landmarks(pair.skull_landmarks, sample_global(tdd, 0.0))
            res = adapt_face(model, f_init, targets, pairing, config)
            results[pid] = res.mesh_in_target_frame()
        report = evaluate_set(results, {pid: pairs[pid].face_mesh for pid in fold},
                              200.0)
        fold_means.append(report.mean)
        all_nme.update(report.per_pair_nme)
        print(f"fold {fold_idx}: mean NME {100 * report.mean:.3f}% over {len(fold)} pairs")

    out.mkdir(parents=True, exist_ok=True)
    values = np.array(list(all_nme.values()))
    overall = EvalReport(per_pair_nme=all_nme, mean=float(values.mean()),
                         max=float(values.max()), std=float(values.std()),
                         mean_mm=float(values.mean() * 200.0))
    overall.save(out / "evaluation.json")
    table = format_table({"Ours (avg. tissue)": overall})
    (out / "table.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    print("per-fold means (%): " + ", ".join(f"{100 * m:.3f}" for m in fold_means))
    _write_manifest(out, "evaluate", args, {"folds": len(split.folds)},
                    ["evaluation.json", "table.txt"], started)
    return 0


ABLATION_ROWS = {
    "before": None,
    "proj_only": dict(enable_lmk=False, enable_sym=False),
    "lmk_only": dict(enable_proj=False, enable_sym=False),
    "lmk_proj": dict(enable_sym=False),
    "full": {},
}


def cmd_ablate(args) -> int:
    started = time.time()
    root = _data_root(args)
    out = Path(args.out)
    schema = default_schema()
    pairing = schema.pairing()
    model = load_model(root / "model")
    base_config = _load_adaptation_config(args)
    split = load_split(root / "split.json")
    test_ids = list(split.test)[: args.limit] if args.limit else list(split.test)
    train_depths = [load_pair(root / "pairs", pid).gt_depths for pid in split.train]
    tdd = fit_tdd_global(train_depths)
    test_pairs = [load_pair(root / "pairs", pid) for pid in test_ids]

    from .facemodel import decode

    rows: dict[str, EvalReport] = {}
    for row_name, toggles in ABLATION_ROWS.items():
        results = {}
        for j, pair in enumerate(test_pairs):
            f_init = sample_prior(model, seed=args.seed + j)
            if toggles is None:
                results[pair.id] = decode(model, f_init)
                continue
            cfg_fields = base_config.to_json()
            cfg_fields.update(toggles)
            cfg = AdaptationConfig.from_json(cfg_fields)
            targets = extend_landmarks(pair.skull_landmarks, sample_global(tdd, 0.0))
            res = adapt_face(model, f_init, targets, pairing, cfg)
            results[pair.id] = res.mesh_in_target_frame()
        rows[row_name] = evaluate_set(
            results, {p.id: p.face_mesh for p in test_pairs}, 200.0
        )
        print(f"{row_name:10s} mean NME {100 * rows[row_name].mean:.3f}%")

    means = {name: r.mean for name, r in rows.items()}
    ordering_ok = (
        means["before"] >= max(v for k, v in means.items() if k != "before") - 1e-12
        and means["proj_only"] >= 0.95 * means["lmk_only"]
        and means["lmk_only"] >= 0.95 * means["lmk_proj"]
        and means["lmk_proj"] >= 0.95 * means["full"]
        and means["full"] <= 1.05 * min(means.values())
    )
    print("ablation ordering (5% tie band): " + ("consistent" if ordering_ok else "VIOLATED"))
    _dump_json({"rows": {k: r.to_json() for k, r in rows.items()},
                "ordering_consistent": ordering_ok},
               out / "ablation.json")
    (out / "table.txt").write_text(format_table(rows) + "\n", encoding="utf-8")
    _write_manifest(out, "ablate", args, {"test_ids": test_ids},
                    ["ablation.json", "table.txt"], started)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app_from_paths

    root = _data_root(args)
    app = create_app_from_paths(root)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cranioforge")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic skull-face dataset")
    gen.add_argument("--count", type=int, default=100)
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--out", required=True)
    gen.add_argument("--model-seed", type=int, default=1)
    gen.add_argument("--model-k", type=int, default=58)
    gen.add_argument("--folds", type=int, default=5)
    gen.add_argument("--c-std", type=float, default=DepthSpec.c_std)
    gen.add_argument("--noise-std", type=float, default=DepthSpec.noise_std)
    gen.add_argument("--latent-std", type=float, default=DepthSpec.latent_std)
    gen.set_defaults(func=cmd_gen_data)

    fit = sub.add_parser("fit-tdd", help="fit tissue-depth distribution models")
    fit.add_argument("--data", default=None)
    fit.add_argument("--out", default=None)
    fit.add_argument("--partition", default=None, help="region partition JSON")
    fit.add_argument("--all-pairs", action="store_true",
                     help="train on every pair instead of the train split")
    fit.set_defaults(func=cmd_fit_tdd)

    rec = sub.add_parser("reconstruct", help="reconstruct a face from a skull")
    rec.add_argument("--data", default=None)
    rec.add_argument("--pair-id", default=None)
    rec.add_argument("--skull", default=None, help="skull landmark JSON file")
    rec.add_argument("--mode", default="avg",
                     help="avg | thin | normal | fat | best | c=<value>")
    rec.add_argument("--seed", type=int, default=0)
    rec.add_argument("--attributes", default=None,
                     help='JSON map, e.g. {"face_shape": "Fat"}')
    rec.add_argument("--config", default=None, help="adaptation config JSON")
    rec.add_argument("--no-gt", action="store_true",
                     help="ignore ground truth even when the pair has one")
    rec.add_argument("--out", required=True)
    rec.set_defaults(func=cmd_reconstruct)

    ev = sub.add_parser("evaluate", help="k-fold cross-validated reconstruction error")
    ev.add_argument("--data", default=None)
    ev.add_argument("--out", required=True)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--config", default=None)
    ev.set_defaults(func=cmd_evaluate)

    ab = sub.add_parser("ablate", help="loss-term ablation table on the test split")
    ab.add_argument("--data", default=None)
    ab.add_argument("--out", required=True)
    ab.add_argument("--seed", type=int, default=0)
    ab.add_argument("--limit", type=int, default=None)
    ab.add_argument("--config", default=None)
    ab.set_defaults(func=cmd_ablate)

    srv = sub.add_parser("serve", help="run the interactive editing service")
    srv.add_argument("--data", default=None)
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8472)
    srv.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CranioforgeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
