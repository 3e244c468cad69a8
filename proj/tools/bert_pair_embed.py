#!/usr/bin/env python3
# Copyright (c) 2026 The cuctts Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Embeds rendered sentence pairs with a pretrained masked language model.

Input is the file written by `cuctts embed-context --list-pairs`: one pair per
line, "[CLS] <left> [SEP] <right>", already normalized. Output is the JSON
lines file read by `--embedder precomputed`: {"pair": ..., "embedding": [...]}
holding the final-layer classifier-token vector.

Requires `torch` and `transformers`.
"""

import argparse
import json

import torch
from transformers import AutoModel, AutoTokenizer


def split_pair(line):
    body = line[len("[CLS]"):] if line.startswith("[CLS]") else line
    left, _, right = body.partition("[SEP]")
    return left.strip(), right.strip()


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", required=True, help="file from embed-context --list-pairs")
    parser.add_argument("--out", required=True, help="JSON lines output")
    parser.add_argument("--model", default="bert-base-uncased")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--device", default="cuda" if torch.cuda.is_available() else "cpu")
    args = parser.parse_args()

    with open(args.pairs, encoding="utf-8") as f:
        lines = [l.rstrip("\n") for l in f if l.strip()]
    tokenizer = AutoTokenizer.from_pretrained(args.model)
    model = AutoModel.from_pretrained(args.model).to(args.device).eval()

    with open(args.out, "w", encoding="utf-8") as out, torch.no_grad():
        for start in range(0, len(lines), args.batch_size):
            batch = lines[start:start + args.batch_size]
            left, right = zip(*(split_pair(l) for l in batch))
            enc = tokenizer(list(left), list(right), padding=True, truncation=True, return_tensors="pt")
            hidden = model(**enc.to(args.device)).last_hidden_state[:, 0]
            for line, vec in zip(batch, hidden.cpu().tolist()):
                out.write(json.dumps({"pair": line, "embedding": vec}) + "\n")


if __name__ == "__main__":
    main()
