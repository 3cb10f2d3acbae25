#!/usr/bin/env python3
"""Fine-tune a Hugging Face sequence classifier and predict labels.

Called by the `process` fine-tune adapter:

    finetune_hf.py --train T.jsonl --predict P.jsonl --out O.json \
        --seed 42 --backbone distilbert-base-uncased --batch-size 4 --epochs 4

Input lines are {"text": ..., "label": ...} (train) or {"text": ...}
(predict). Writes a JSON array of label names, one per predict line.
Needs `torch` and `transformers`.
"""

import argparse
import json
import random
import re

MENTION = re.compile(r"(?<!\w)@\w+")
URL = re.compile(r"(https?://\S+|www\.\S+)")


def clean(text):
    return " ".join(URL.sub(" ", MENTION.sub(" ", text)).split())


def read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--train", required=True)
    ap.add_argument("--predict", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--backbone", default="distilbert-base-uncased")
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--epochs", type=int, default=4)
    ap.add_argument("--lr", type=float, default=2e-5)
    ap.add_argument("--max-length", type=int, default=128)
    args = ap.parse_args()

    import numpy as np
    import torch
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    random.seed(args.seed)
    np.random.seed(args.seed)
    torch.manual_seed(args.seed)

    train = read_jsonl(args.train)
    test = read_jsonl(args.predict)
    labels = sorted({r["label"] for r in train})
    index = {l: i for i, l in enumerate(labels)}

    device = "cuda" if torch.cuda.is_available() else "cpu"
    tok = AutoTokenizer.from_pretrained(args.backbone)
    model = AutoModelForSequenceClassification.from_pretrained(args.backbone, num_labels=len(labels)).to(device)
    opt = torch.optim.Adam(model.parameters(), lr=args.lr)

    def encode(texts):
        return tok([clean(t) for t in texts], truncation=True, max_length=args.max_length,
                   padding=True, return_tensors="pt").to(device)

    model.train()
    for _ in range(args.epochs):
        order = list(range(len(train)))
        random.shuffle(order)
        for start in range(0, len(order), args.batch_size):
            batch = [train[i] for i in order[start:start + args.batch_size]]
            enc = encode([r["text"] for r in batch])
            y = torch.tensor([index[r["label"]] for r in batch], device=device)
            loss = model(**enc, labels=y).loss
            opt.zero_grad()
            loss.backward()
            opt.step()

    model.eval()
    preds = []
    with torch.no_grad():
        for start in range(0, len(test), 32):
            enc = encode([r["text"] for r in test[start:start + 32]])
            preds.extend(model(**enc).logits.argmax(-1).tolist())
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump([labels[i] for i in preds], f)


if __name__ == "__main__":
    main()
