#!/usr/bin/env python3
"""Stand-in model process for the pipe adapters (line-delimited JSON).

    fake_adapter.py [--dim N] [--mode ok|error|exit|slow|garbage|nan] [--after K]

ok:      score = word-overlap Jaccard of a and b; translate = "<text> [<tgt>]";
         embed = unit vector seeded by crc32(text).
error:   every reply after the first K is {"error": ...}.
exit:    exits with status 3 after K replies.
slow:    sleeps 5 s before replying after K replies.
garbage: replies a non-JSON line after K replies.
nan:     score requests get NaN after K replies.
"""
import argparse
import json
import math
import random
import sys
import time
import zlib


def words(s):
    return set(s.lower().split())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--mode", default="ok")
    ap.add_argument("--after", type=int, default=0)
    a = ap.parse_args()
    served = 0
    for line in sys.stdin:
        req = json.loads(line)
        op = req.get("op")
        bad = served >= a.after
        if a.mode == "exit" and bad:
            sys.exit(3)
        if a.mode == "slow" and bad:
            time.sleep(5)
        if a.mode == "garbage" and bad:
            sys.stdout.write("not json\n")
            sys.stdout.flush()
            served += 1
            continue
        if a.mode == "error" and bad:
            reply = {"error": "model unavailable"}
        elif op == "score":
            wa, wb = words(req["a"]), words(req["b"])
            s = len(wa & wb) / len(wa | wb) if wa | wb else 0.0
            reply = {"score": float("nan") if a.mode == "nan" and bad else s}
        elif op == "translate":
            reply = {"text": "%s [%s]" % (req["text"], req["tgt"])}
        elif op == "embed":
            rng = random.Random(zlib.crc32(req["text"].encode("utf-8")))
            v = [rng.gauss(0.0, 1.0) for _ in range(a.dim)]
            n = math.sqrt(sum(x * x for x in v))
            reply = {"vector": [x / n for x in v]}
        else:
            reply = {"error": "unknown op %r" % op}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()
        served += 1


if __name__ == "__main__":
    main()
