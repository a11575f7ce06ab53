import csv
import json

import numpy as np
import pytest

from eleflow.ingest import FeatureMatrix


def make_separable(n_rows=5000, n_features=20, elephant_share=0.10, seed=42,
                   spread=0.25, shift=1.0) -> FeatureMatrix:
    """Two Gaussian blobs: mice around 0, elephants shifted up in every
    feature. Cleanly learnable by any of the detector families."""
    rng = np.random.default_rng(seed)
    n_elephants = int(round(elephant_share * n_rows))
    labels = np.zeros(n_rows, dtype=np.int64)
    labels[:n_elephants] = 1
    rng.shuffle(labels)
    values = rng.normal(loc=0.0, scale=spread, size=(n_rows, n_features))
    values[labels == 1] += shift
    names = tuple(f"f{i}" for i in range(n_features))
    return FeatureMatrix(values, names, labels)


@pytest.fixture(scope="session")
def separable_5k() -> FeatureMatrix:
    return make_separable()


@pytest.fixture(scope="session")
def separable_small() -> FeatureMatrix:
    return make_separable(n_rows=400, n_features=8)


SMALL_SCHEMA = {
    "name": "toy",
    "class_positive": "1",
    "columns": (
        [{"name": "duration", "kind": "numeric"},
         {"name": "packets", "kind": "numeric"},
         {"name": "bytes", "kind": "numeric"},
         {"name": "rate", "kind": "numeric"},
         {"name": "proto", "kind": "categorical"},
         {"name": "class", "kind": "class"}]
    ),
    "label_fields": {
        "duration": "duration",
        "fwd_packets": "packets",
        "fwd_bytes": "bytes",
    },
}


def write_schema(path) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(SMALL_SCHEMA, fh)
    return str(path)


def write_toy_csv(path, n_rows=240, seed=7, labeled=True) -> str:
    """CSV under the toy schema; elephants get big everything."""
    rng = np.random.default_rng(seed)
    header = ["duration", "packets", "bytes", "rate", "proto"]
    if labeled:
        header.append("class")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(n_rows):
            elephant = i % 5 == 0  # 20% elephants
            if elephant:
                duration = 12.0 + rng.random() * 20
                packets = int(200 + rng.integers(0, 500))
                nbytes = int(200_000 + rng.integers(0, 100_000))
            else:
                duration = rng.random() * 5
                packets = int(rng.integers(1, 12))
                nbytes = int(rng.integers(40, 5_000))
            rate = nbytes / max(duration, 1e-3)
            row = [f"{duration:.3f}", packets, nbytes, f"{rate:.3f}",
                   "HTTP" if i % 2 else "GTalk"]
            if labeled:
                row.append(1 if elephant else 0)
            writer.writerow(row)
    return str(path)
