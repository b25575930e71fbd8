"""Fine-tune a sequence-pair classification checkpoint on sampled pairs.

Input is the JSON-lines pair format produced by the pipeline's ``sample``
command (question, answer, label, source ids). The run holds out a share of
the pairs, fine-tunes, writes the checkpoint directory plus a metrics.json
with held-out precision/recall/F1, and exits nonzero on data-format errors.

Hyperparameters follow common pair-classification practice; they are logged
with the checkpoint, not sourced from any experiment.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

logger = logging.getLogger(__name__)

CORRECT = "correct"
INCORRECT = "incorrect"


class DataFormatError(Exception):
    pass


def load_pairs(path: str | Path) -> list[dict]:
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            pair = {
                "question": row["question"],
                "answer": row["answer"],
                "label": 1 if row["label"] == CORRECT else 0,
            }
            if row["label"] not in (CORRECT, INCORRECT):
                raise KeyError("label")
        except (ValueError, KeyError, TypeError) as exc:
            raise DataFormatError(f"{path}:{lineno}: bad pair row: {exc}") from exc
        pairs.append(pair)
    if not pairs:
        raise DataFormatError(f"{path}: no pairs found")
    if len({p["label"] for p in pairs}) < 2:
        raise DataFormatError(f"{path}: needs both labels")
    return pairs


def holdout_split(pairs: list[dict], ratio: float, seed: int):
    order = list(range(len(pairs)))
    random.Random(seed).shuffle(order)
    cut = max(1, round(ratio * len(pairs)))
    train = [pairs[i] for i in order[:cut]]
    held = [pairs[i] for i in order[cut:]]
    if not held:
        held = train[-1:]
    return train, held


def metrics_from_counts(tp: int, fp: int, fn: int) -> dict:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def finetune(
    pairs_file: str | Path,
    out_dir: str | Path,
    base_model: str = "bert-base-cased",
    epochs: int = 2,
    batch_size: int = 16,
    learning_rate: float = 2e-5,
    max_length: int = 256,
    holdout_ratio: float = 0.67,
    seed: int = 0,
    limit: int | None = None,
) -> dict:
    """Run the fine-tune and return the held-out metrics."""
    pairs = load_pairs(pairs_file)
    if limit:
        pairs = pairs[:limit]
    train_pairs, held_pairs = holdout_split(pairs, holdout_ratio, seed)
    logger.info("training on %d pairs, holding out %d", len(train_pairs), len(held_pairs))

    import torch
    from torch.utils.data import DataLoader
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    torch.manual_seed(seed)
    tokenizer = AutoTokenizer.from_pretrained(base_model)
    model = AutoModelForSequenceClassification.from_pretrained(base_model, num_labels=2)
    device = "cuda" if torch.cuda.is_available() else "cpu"
    model.to(device)

    def collate(batch):
        encoded = tokenizer(
            [b["question"] for b in batch],
            [b["answer"] for b in batch],
            padding=True,
            truncation=True,
            max_length=max_length,
            return_tensors="pt",
        )
        encoded["labels"] = torch.tensor([b["label"] for b in batch])
        return encoded

    loader = DataLoader(
        train_pairs, batch_size=batch_size, shuffle=True, collate_fn=collate,
        generator=torch.Generator().manual_seed(seed),
    )
    optimizer = torch.optim.AdamW(model.parameters(), lr=learning_rate)
    model.train()
    for epoch in range(epochs):
        total = 0.0
        for batch in loader:
            batch = {k: v.to(device) for k, v in batch.items()}
            out = model(**batch)
            out.loss.backward()
            optimizer.step()
            optimizer.zero_grad()
            total += out.loss.item()
        logger.info("epoch %d/%d: loss %.4f", epoch + 1, epochs, total / max(1, len(loader)))

    model.eval()
    tp = fp = fn = 0
    eval_loader = DataLoader(held_pairs, batch_size=batch_size, collate_fn=collate)
    with torch.no_grad():
        for batch in eval_loader:
            labels = batch.pop("labels")
            batch = {k: v.to(device) for k, v in batch.items()}
            predicted = model(**batch).logits.argmax(dim=-1).cpu()
            for want, got in zip(labels.tolist(), predicted.tolist()):
                if got == 1 and want == 1:
                    tp += 1
                elif got == 1:
                    fp += 1
                elif want == 1:
                    fn += 1

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    metrics = {
        **metrics_from_counts(tp, fp, fn),
        "train_pairs": len(train_pairs),
        "held_out_pairs": len(held_pairs),
        "base_model": base_model,
        "epochs": epochs,
        "batch_size": batch_size,
        "learning_rate": learning_rate,
        "seed": seed,
    }
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n", "utf-8")
    return metrics


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level="INFO", format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="av-service-finetune")
    parser.add_argument("--pairs", required=True, help="JSON-lines pair file")
    parser.add_argument("--out", required=True, help="checkpoint output directory")
    parser.add_argument("--base-model", default="bert-base-cased")
    parser.add_argument("--epochs", type=int, default=2)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--learning-rate", type=float, default=2e-5)
    parser.add_argument("--holdout-ratio", type=float, default=0.67)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--limit", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        metrics = finetune(
            args.pairs,
            args.out,
            base_model=args.base_model,
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.learning_rate,
            holdout_ratio=args.holdout_ratio,
            seed=args.seed,
            limit=args.limit,
        )
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4
    print(json.dumps({k: metrics[k] for k in ("precision", "recall", "f1")}, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
