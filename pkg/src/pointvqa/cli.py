"""Operator entry point.

Subcommands: gen-synthetic, pretrain, finetune, evaluate, embed, project.
Every command is reproducible from (inputs, seed); seeds are mandatory.
Config precedence: CLI flag > --config JSON file > environment variable >
built-in default. CLIP3D_EMBED_PATH provides the default embedding store.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import config as model_configs
from .checkpoint import load_checkpoint, load_into
from .clip_provider import (ModalEmbedding, load_embeddings,
                            stub_scene_embedding, write_embeddings)
from .data import (AugmentConfig, build_answer_vocab, generate_synthetic_scene,
                   load_dataset, load_qa_dataset, qa_to_json, save_dataset,
                   scene_to_json)
from .geometry import CLASS_NAMES
from .metrics import compute_report, pairs_from_predictions, render_table
from .pretrain import (PretrainConfig, PretrainModel, encode_scenes,
                       run_pretraining)
from .tsne import exact_tsne
from .vqa import (FinetuneConfig, load_predictions, predict_dataset,
                  run_finetuning, write_predictions)

EMBED_PATH_ENV = "CLIP3D_EMBED_PATH"

MODEL_PRESETS = {"paper": model_configs.paper, "small": model_configs.small,
                 "toy": model_configs.toy}


def _prepare_out(path, force):
    if os.path.exists(path) and os.listdir(path) and not force:
        raise FileExistsError(
            f"output directory {path} is not empty (pass --force to overwrite)")
    os.makedirs(path, exist_ok=True)


def _embedding_path(args):
    path = args.embeddings or os.environ.get(EMBED_PATH_ENV)
    if not path:
        raise ValueError("no embedding store given (use --embeddings or set "
                         f"{EMBED_PATH_ENV})")
    return path


def canonical_layout_string(scene) -> str:
    """Stable text describing the scene layout; stands in for a rendered
    top-down image as the stub image-encoder input."""
    colors = scene.object_colors or [""] * len(scene.objects)
    items = sorted(f"{c} {obj.class_name.replace('_', ' ')}".strip()
                   for obj, c in zip(scene.objects, colors))
    return f"{scene.scene_type} layout : " + " , ".join(items)


def cmd_gen_synthetic(args):
    if args.count < 1:
        raise ValueError("--count must be >= 1")
    types = args.types.split(",")
    _prepare_out(args.out, args.force)
    scenes_dir = os.path.join(args.out, "scenes")
    os.makedirs(scenes_dir, exist_ok=True)

    all_qa = []
    embeddings = []
    pairs = []
    for i in range(args.count):
        scene_type = types[i % len(types)]
        scene, qa = generate_synthetic_scene(args.seed + i, scene_type)
        pairs.append((scene, qa))
        all_qa.extend(qa)
        embeddings.append(ModalEmbedding(
            scene.scene_id, "text",
            stub_scene_embedding(scene.description, "text")))
        embeddings.append(ModalEmbedding(
            scene.scene_id, "image",
            stub_scene_embedding(canonical_layout_string(scene), "image")))
    save_dataset(scenes_dir, pairs, force=args.force)
    with open(os.path.join(args.out, "qa.json"), "w", encoding="utf-8") as f:
        json.dump([qa_to_json(r) for r in all_qa], f)
    write_embeddings(os.path.join(args.out, "embeddings.jsonl"), embeddings)
    print(f"wrote {args.count} scenes, {len(all_qa)} qa records, "
          f"{len(embeddings)} embeddings to {args.out}")


def cmd_pretrain(args):
    _prepare_out(args.out, args.force)
    scenes, _ = load_dataset(args.data)
    store = load_embeddings(_embedding_path(args))
    augment = None if args.no_augment else AugmentConfig(seed=args.seed)
    cfg = PretrainConfig(
        alpha=args.alpha, beta=args.beta, epochs=args.epochs,
        batch_size=args.batch_size, learning_rate=args.lr,
        weight_decay=args.weight_decay, seed=args.seed,
        max_steps=args.max_steps, augment=augment)
    result = run_pretraining(scenes, store, cfg,
                             model_cfg=MODEL_PRESETS[args.model](),
                             out_dir=args.out)
    last = result.loss_history[-1]
    print(f"pretraining done: {last['step']} steps, final loss "
          f"{last['l_total']:.4f}; checkpoints in {args.out}")


def cmd_finetune(args):
    _prepare_out(args.out, args.force)
    scenes, qa = load_dataset(args.data)
    vocab = build_answer_vocab(qa)
    augment = None if args.no_augment else AugmentConfig(seed=args.seed)
    cfg = FinetuneConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.lr, seed=args.seed, max_steps=args.max_steps,
        augment=augment)
    pretrained = None if args.from_scratch else args.checkpoint
    if pretrained is None and not args.from_scratch:
        raise ValueError("pass --checkpoint or --from-scratch")
    result = run_finetuning(scenes, qa, vocab, cfg,
                            model_cfg=MODEL_PRESETS[args.model](),
                            pretrained=pretrained, out_dir=args.out)
    with open(os.path.join(args.out, "vocab.json"), "w", encoding="utf-8") as f:
        json.dump(list(vocab.answers), f)
    preds = predict_dataset(result.model, scenes, qa, vocab)
    write_predictions(os.path.join(args.out, "predictions.jsonl"), preds)
    last = result.loss_history[-1]
    print(f"finetuning done: {last['step']} steps, final loss "
          f"{last['l_total']:.4f}; outputs in {args.out}")


def cmd_evaluate(args):
    _prepare_out(args.out, args.force)
    qa = load_qa_dataset(args.data)
    predictions = load_predictions(args.predictions)
    report = compute_report(pairs_from_predictions(predictions, qa))
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as f:
        f.write(report.to_json())
    table = render_table(report)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as f:
        f.write(table + "\n")
    print(table)


def _load_pretrain_model(checkpoint_path):
    params, manifest = load_checkpoint(checkpoint_path)
    model_cfg = model_configs.ModelConfig(
        **{k: tuple(v) if isinstance(v, list) else v
           for k, v in manifest["config"]["model"].items()})
    model = PretrainModel(model_cfg)
    load_into(model, params, prefixes=("detector.", "scene_encoder."))
    return model


def cmd_embed(args):
    scenes, _ = load_dataset(args.data)
    model = _load_pretrain_model(args.checkpoint)
    z_scene, z_aligned = encode_scenes(model, scenes)
    with open(args.out, "w", encoding="utf-8") as f:
        for i, scene in enumerate(scenes):
            f.write(json.dumps({
                "scene_id": scene.scene_id,
                "scene_type": scene.scene_type,
                "z_scene": [float(v) for v in z_scene[i]],
                "z_aligned": [float(v) for v in z_aligned[i]]}) + "\n")
    print(f"wrote {len(scenes)} scene embeddings to {args.out}")


def cmd_project(args):
    _prepare_out(args.out, args.force)
    scenes, _ = load_dataset(args.data)
    if len(scenes) < 5:
        raise ValueError("need at least 5 scenes to project")
    model = _load_pretrain_model(args.checkpoint)
    z_scene, _ = encode_scenes(model, scenes)
    coords = exact_tsne(z_scene, perplexity=args.perplexity, seed=args.seed)

    tsv_path = os.path.join(args.out, "coordinates.tsv")
    with open(tsv_path, "w", encoding="utf-8") as f:
        f.write("scene_id\tx\ty\tscene_type\n")
        for scene, (x, y) in zip(scenes, coords):
            f.write(f"{scene.scene_id}\t{x!r}\t{y!r}\t{scene.scene_type}\n")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    types = sorted({s.scene_type for s in scenes})
    fig, ax = plt.subplots(figsize=(6, 5))
    for t in types:
        idx = [i for i, s in enumerate(scenes) if s.scene_type == t]
        ax.scatter(coords[idx, 0], coords[idx, 1], label=t, s=18)
    ax.legend()
    ax.set_title("scene embedding projection")
    fig.savefig(os.path.join(args.out, "projection.png"), dpi=150)
    plt.close(fig)
    print(f"wrote {tsv_path} and projection.png")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pointvqa",
        description="3D question answering with alignment pre-training")
    parser.add_argument("--config", help="JSON config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--types", default="kitchen,office,bathroom")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("pretrain", help="alignment pre-training")
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--model", choices=sorted(MODEL_PRESETS), default="small")
    p.add_argument("--alpha", type=float, default=0.02)
    p.add_argument("--beta", type=float, default=0.02)
    p.add_argument("--epochs", type=int, default=6)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=1e-5)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune the QA model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--checkpoint", default=None,
                   help="pre-trained checkpoint to transfer from")
    p.add_argument("--from-scratch", action="store_true",
                   help="skip checkpoint loading (ablation)")
    p.add_argument("--model", choices=sorted(MODEL_PRESETS), default="small")
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="score predictions against a dataset")
    p.add_argument("--predictions", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("embed", help="export scene embeddings")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("project", help="2-d projection plot of scene embeddings")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--perplexity", type=float, default=5.0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_project)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            overrides = json.load(f)
        supplied = {a.split("=")[0].lstrip("-").replace("-", "_")
                    for a in (argv if argv is not None else sys.argv[1:])
                    if a.startswith("--")}
        for key, value in overrides.items():
            attr = key.replace("-", "_")
            if hasattr(args, attr) and attr not in supplied:
                setattr(args, attr, value)
    try:
        args.func(args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
