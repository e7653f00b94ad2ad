"""Test worker: behaviour is picked by the first terminal of the key."""

import json
import sys
import time

for line in sys.stdin:
    req = json.loads(line)
    rid, word = req["id"], req["key"].split()[0]
    if word == "sleep":
        time.sleep(req["timeout_s"] + 3)
        out = {"id": rid, "reward": 0.9}
    elif word == "bad":
        print("{not json", flush=True)
        continue
    elif word == "big":
        out = {"id": rid, "reward": 1.7}
    elif word == "err":
        out = {"id": rid, "error": "fit failed"}
    elif word == "wrongid":
        out = {"id": rid + 100, "reward": 0.5}
    elif word == "die":
        sys.exit(3)
    elif word == "echo":
        out = {"id": rid, "reward": float(req["key"].split()[1])}
    else:
        out = {"id": rid, "reward": 0.42}
    print(json.dumps(out), flush=True)
