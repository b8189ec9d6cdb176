"""Nearest-centroid classifier speaking the line-delimited JSON protocol.

Usage: centroid_oracle.py CENTROIDS_JSON [--fail-after K] [--garbage-at K] [--exit CODE]
CENTROIDS_JSON maps class labels to flattened centroids.
"""
import json
import sys


def main():
    centroids = {int(k): v for k, v in json.loads(sys.argv[1]).items()}
    opts = sys.argv[2:]
    fail_after = int(opts[opts.index("--fail-after") + 1]) if "--fail-after" in opts else None
    garbage_at = int(opts[opts.index("--garbage-at") + 1]) if "--garbage-at" in opts else None
    exit_code = int(opts[opts.index("--exit") + 1]) if "--exit" in opts else 0
    for i, line in enumerate(sys.stdin):
        if fail_after is not None and i >= fail_after:
            break
        if garbage_at is not None and i == garbage_at:
            print("not-a-label", flush=False)
            continue
        x = [v for step in json.loads(line)["values"] for v in step]
        best = min(sorted(centroids), key=lambda c: sum((a - b) ** 2 for a, b in zip(x, centroids[c])))
        print(best)
    sys.exit(exit_code)


if __name__ == "__main__":
    main()
