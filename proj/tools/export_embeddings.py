#!/usr/bin/env python3
"""Export frozen sentence embeddings for a prepared corpus into an embedding store.

The store is what `--encoder store:<file>` reads: every case sentence and law
article text of the prepared corpus, encoded once by a sentence-transformers
checkpoint (e.g. a legal-domain BERT).

    python tools/export_embeddings.py --corpus out/lecard --model <checkpoint> --store emb.lcm
    lcmlai train --corpus out/lecard --encoder store:emb.lcm ...

Set `d_b` in the run config to the checkpoint's embedding width.
"""

import argparse
import hashlib
import json
import os
import struct
import sys

MAGIC = b"LCMEMB01"


def corpus_texts(corpus_dir):
    texts = []
    with open(os.path.join(corpus_dir, "cases.jsonl"), encoding="utf-8") as f:
        for line in f:
            if line.strip():
                texts.extend(json.loads(line)["sentences"])
    with open(os.path.join(corpus_dir, "articles.jsonl"), encoding="utf-8") as f:
        for line in f:
            if line.strip():
                texts.append(json.loads(line)["text"])
    # Empty strings are never looked up; the reader maps them to zero vectors.
    return sorted({t for t in texts if t})


def existing_keys(path, name):
    """Digests already stored under `name`, so re-runs only append what is new."""
    keys = set()
    if not os.path.exists(path):
        return keys
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            sys.exit(f"{path} is not an embedding store")
        while True:
            head = f.read(4)
            if len(head) < 4:
                break
            (n,) = struct.unpack("<I", head)
            rec_name = f.read(n).decode("utf-8")
            digest = f.read(32)
            (dim,) = struct.unpack("<I", f.read(4))
            f.seek(8 * dim, os.SEEK_CUR)
            if rec_name == name:
                keys.add(digest)
    return keys


def write_store(path, name, texts, vectors):
    fresh = not os.path.exists(path)
    encoded_name = name.encode("utf-8")
    with open(path, "ab") as f:
        if fresh:
            f.write(MAGIC)
        for text, vec in zip(texts, vectors):
            f.write(struct.pack("<I", len(encoded_name)))
            f.write(encoded_name)
            f.write(hashlib.sha256(text.encode("utf-8")).digest())
            f.write(struct.pack("<I", len(vec)))
            f.write(struct.pack(f"<{len(vec)}d", *(float(x) for x in vec)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", required=True, help="prepared corpus directory")
    ap.add_argument("--model", required=True, help="sentence-transformers checkpoint name or path")
    ap.add_argument("--store", required=True, help="embedding store file (appended to)")
    ap.add_argument("--name", help="encoder name recorded in the store (default: --model)")
    ap.add_argument("--batch-size", type=int, default=64)
    args = ap.parse_args()

    name = args.name or args.model
    done = existing_keys(args.store, name)
    texts = [t for t in corpus_texts(args.corpus) if hashlib.sha256(t.encode("utf-8")).digest() not in done]
    if not texts:
        print("store already complete")
        return

    from sentence_transformers import SentenceTransformer

    model = SentenceTransformer(args.model)
    vectors = model.encode(texts, batch_size=args.batch_size, show_progress_bar=True, convert_to_numpy=True)
    write_store(args.store, name, texts, vectors)
    print(f"wrote {len(texts)} embeddings of width {vectors.shape[1]} under '{name}'")


if __name__ == "__main__":
    main()
