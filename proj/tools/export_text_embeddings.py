#!/usr/bin/env python3
"""Export per-description text embeddings from a local CLIP-style model.

The output file is what `tgcfa embed-text --provider import` reads:
{"encoder": str, "embeddings": [{"text": str, "vector": [float, ...]}, ...]}
"""

import argparse
import json
import os
import sys


def load_texts(path):
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    texts = []
    for label in doc["labels"]:
        for text in label["descriptions"]:
            if text not in texts:
                texts.append(text)
    return texts


def embed(model_dir, texts, batch_size):
    import torch
    from transformers import AutoTokenizer, CLIPTextModelWithProjection

    tokenizer = AutoTokenizer.from_pretrained(model_dir)
    model = CLIPTextModelWithProjection.from_pretrained(model_dir)
    model.eval()
    vectors = []
    with torch.no_grad():
        for start in range(0, len(texts), batch_size):
            chunk = texts[start:start + batch_size]
            tokens = tokenizer(chunk, padding=True, truncation=True, return_tensors="pt")
            vectors.extend(model(**tokens).text_embeds.tolist())
    return vectors


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", required=True, help="local model directory")
    parser.add_argument("--descriptions", required=True, help="description set JSON")
    parser.add_argument("--out", required=True, help="output embeddings JSON")
    parser.add_argument("--batch-size", type=int, default=16)
    args = parser.parse_args(argv)

    if not os.path.isdir(args.model):
        print(f"model directory not found: {args.model}", file=sys.stderr)
        return 2
    texts = load_texts(args.descriptions)
    vectors = embed(args.model, texts, args.batch_size)
    doc = {
        "encoder": os.path.basename(os.path.normpath(args.model)),
        "embeddings": [{"text": t, "vector": v} for t, v in zip(texts, vectors)],
    }
    tmp = args.out + ".partial"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(doc, f)
    os.replace(tmp, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
