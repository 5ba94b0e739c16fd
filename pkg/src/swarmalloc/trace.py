"""Line-delimited JSON artifacts: traces, metrics, reports.

Every file starts with a header record carrying the format name, the config
hash and the seed.  Records contain only deterministic fields, so rerunning
a command with the same config and seed reproduces files byte for byte.
"""

from __future__ import annotations

import json

from .config import RunConfig, config_hash


class NdjsonWriter:
    def __init__(self, path, fmt: str, config: RunConfig, seed: int):
        self._fh = open(path, "w")
        self.path = path
        self.write({
            "kind": "header",
            "format": fmt,
            "config_hash": config_hash(config),
            "seed": seed,
        })

    def write(self, record: dict):
        self._fh.write(json.dumps(record, sort_keys=True))
        self._fh.write("\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_ndjson(path) -> list[dict]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def split_header(records: list[dict]) -> tuple[dict, list[dict]]:
    if not records or records[0].get("kind") != "header":
        raise ValueError("artifact file is missing its header record")
    return records[0], records[1:]
