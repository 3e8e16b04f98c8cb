#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Writes the VWAP fixture: models plus seeded trade and quote files."""

import argparse
import csv
import json
import random
from pathlib import Path

ROWS = 20
FIRST_ROW = 3
QUOTE_ROW = 29


def vwap_model(partitioned):
    last = FIRST_ROW + ROWS - 1
    trades = {
        "name": "trades",
        "attrs": [
            {"name": "sym", "type": "text"},
            {"name": "price", "type": "number"},
            {"name": "vol", "type": "number"},
            {"name": "ts", "type": "timestamp"},
        ],
        "ts_attr": "ts",
    }
    quotes = {
        "name": "quotes",
        "attrs": [
            {"name": "sym", "type": "text"},
            {"name": "price", "type": "number"},
            {"name": "ts", "type": "timestamp"},
        ],
        "ts_attr": "ts",
    }
    if partitioned:
        trades["partition_by"] = "sym"
        quotes["partition_by"] = "sym"
    cells = [{"addr": f"D{r}", "formula": f"=B{r}*C{r}"} for r in range(FIRST_ROW, last + 1)]
    cells.append({"addr": "G3", "formula": f"=SUM(D{FIRST_ROW}:D{last})/SUM(C{FIRST_ROW}:C{last})"})
    cells.append({"addr": "G7", "formula": f"=IF(COUNT(B{QUOTE_ROW})=0,FALSE,B{QUOTE_ROW}<G3)"})
    return {
        "streams": [trades, quotes],
        "bindings": [
            {"stream": "trades", "kind": "scroll", "region": f"A{FIRST_ROW}:C{last}", "rows": ROWS,
             "projection": ["sym", "price", "vol"]},
            {"stream": "quotes", "kind": "latest", "region": f"A{QUOTE_ROW}:B{QUOTE_ROW}",
             "projection": ["sym", "price"]},
        ],
        "cells": cells,
        "exports": [{"addr": "G3", "name": "vwap"}, {"addr": "G7", "name": "isBargain"}],
    }


def mixed_keys_model():
    model = vwap_model(True)
    quotes = model["streams"][1]
    quotes["attrs"].insert(1, {"name": "geo", "type": "text"})
    quotes["partition_by"] = "geo"
    return model


def write_json(path, doc):
    path.write_text(json.dumps(doc, indent=2) + "\n")


def generate(out_dir, seed, n_trades, n_quotes, symbols):
    rng = random.Random(seed)
    trades = []
    ts = 1_700_000_000_000
    price = {s: 100.0 + 10 * i for i, s in enumerate(symbols)}
    for _ in range(n_trades):
        ts += rng.randint(0, 4000)
        sym = rng.choice(symbols)
        price[sym] = max(1.0, price[sym] + rng.uniform(-0.8, 0.8))
        trades.append((sym, round(price[sym], 2), rng.randint(1, 500), ts))
    # Quotes land on trade timestamps now and then to exercise the tie order.
    quote_ts = sorted(rng.choice([t[3], t[3] + rng.randint(1, 3000)])
                      for t in rng.sample(trades[5:], n_quotes))
    quotes = []
    for qts in quote_ts:
        sym = rng.choice(symbols)
        quotes.append((sym, round(price[sym] + rng.uniform(-1.5, 1.5), 2), qts))

    with open(out_dir / "trades.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sym", "price", "vol", "ts"])
        w.writerows(trades)
    with open(out_dir / "quotes.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sym", "price", "ts"])
        w.writerows(quotes)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_json(args.out_dir / "vwap.sheet.json", vwap_model(False))
    write_json(args.out_dir / "vwap_by_sym.sheet.json", vwap_model(True))
    write_json(args.out_dir / "mixed_keys.sheet.json", mixed_keys_model())
    generate(args.out_dir, args.seed, 200, 20, ["ACME"])
    multi = args.out_dir / "multi"
    multi.mkdir(exist_ok=True)
    generate(multi, args.seed + 1, 600, 60, ["ACME", "GLOBEX", "INITECH"])


if __name__ == "__main__":
    main()
