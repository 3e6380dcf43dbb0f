#!/usr/bin/env python3
"""Independent XLPV1 writer for golden-format fixtures.

    python3 write_xlpv1.py OUT.xlpv1 --dim 4 --count 3 [--seed 7] [--encoder NAME]

Writes vectors drawn from a seeded Gaussian, L2-normalized in float64 then
stored as float32, ids "v0000".., and a JSON sidecar OUT.json listing the
ids and the stored float values (as decimal strings of the float32 values).
"""
import argparse
import json
import random
import struct
import zlib


def build(dim, count, seed, encoder):
    rng = random.Random(seed)
    ids, rows = [], []
    for i in range(count):
        v = [rng.gauss(0.0, 1.0) for _ in range(dim)]
        n = sum(x * x for x in v) ** 0.5
        f32 = [struct.unpack("<f", struct.pack("<f", x / n))[0] for x in v]
        ids.append("v%04d" % i)
        rows.append(f32)
    body = bytearray(b"XLPV1\0")
    body += struct.pack("<IQ", dim, count)
    for id_, row in zip(ids, rows):
        raw = id_.encode("utf-8")
        body += struct.pack("<H", len(raw)) + raw
        body += struct.pack("<%df" % dim, *row)
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    meta = json.dumps({"encoder": encoder, "normalized": True}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body += struct.pack("<I", len(meta)) + meta
    return bytes(body), ids, rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--dim", type=int, required=True)
    ap.add_argument("--count", type=int, required=True)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--encoder", default="golden-gauss")
    a = ap.parse_args()
    data, ids, rows = build(a.dim, a.count, a.seed, a.encoder)
    with open(a.out, "wb") as f:
        f.write(data)
    side = a.out.rsplit(".", 1)[0] + ".json"
    with open(side, "w") as f:
        json.dump({"dim": a.dim, "encoder": a.encoder, "ids": ids,
                   "vectors": [[repr(x) for x in r] for r in rows]}, f)
        f.write("\n")


if __name__ == "__main__":
    main()
