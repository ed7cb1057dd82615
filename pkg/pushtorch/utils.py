# Note: need NumPy 1.17 or later for RNG functions
import json
import logging
import math
import os

import numpy as np
import pandas as pd
import torch

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1


def valid_split(n, split, seed=0):
    """Randomly split ``range(n)`` into non-overlapping train and validation index arrays.
    Optionally fix the generator for reproducible results. With a single sample both sets hold it.

    Example ::

        from pushtorch import utils

        train_idx, val_idx = utils.valid_split(100, 0.1)
        print(len(train_idx), len(val_idx))
        >>> 90 10

    :param n: Number of samples
    :type n: int

    :param split: Proportion of samples assigned to the validation set from the full set
    :type split: float

    :param seed: Fix to generate reproducible results, defaults to ``0``
    :type seed: int, optional

    :return: Train and validation indices
    :rtype: tuple of numpy.ndarray
    """
    if not 0 <= split < 1:
        raise ValueError(f"``split`` [{split}] must be between [0, 1).")
    if n < 1:
        raise ValueError("``n`` must be at least 1.")
    if n == 1:
        return np.array([0]), np.array([0])
    indices = np.random.default_rng(seed).permutation(n)
    n_val = min(max(int(round(n * split)), 1), n - 1) if split > 0 else 0
    return indices[n_val:], indices[:n_val]


def wilson_interval(successes, n, z=1.959963984540054):
    """Wilson score interval of a binomial proportion (95% by default).

    Example::

        from pushtorch import utils

        utils.wilson_interval(0, 10)
        >>> (0.0, 0.2775327998628892)

    """
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def seed_everything(seed):
    """Seeds torch's global generator and returns a dedicated :class:`torch.Generator` and numpy generator."""
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    return generator, np.random.default_rng(seed)


def rng_state(rng):
    return rng.bit_generator.state


def set_rng_state(rng, state):
    rng.bit_generator.state = state
    return rng


def save_checkpoint(path, payload):
    """Writes ``payload`` with a format version through ``torch.save``."""
    payload = dict(payload, format=CHECKPOINT_FORMAT)
    tmp = f"{path}.tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)
    log.info("checkpoint written to %s", path)


def load_checkpoint(path):
    # checkpoints carry numpy RNG states and dataclass configs, so the full unpickler is needed
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format")
    if version != CHECKPOINT_FORMAT:
        raise ValueError(f"Checkpoint {path} has format [{version}], expected [{CHECKPOINT_FORMAT}].")
    return payload


class MetricsWriter:
    """Appends rows to a CSV file, flushing after every call so interrupted runs stay readable."""

    def __init__(self, path, columns=None):
        self.path = path
        self.columns = columns
        self._header = not os.path.exists(path)

    def write(self, rows):
        if isinstance(rows, dict):
            rows = [rows]
        if not rows:
            return
        frame = pd.DataFrame(rows, columns=self.columns)
        frame.to_csv(self.path, mode="a", header=self._header, index=False)
        self._header = False


def write_jsonl(path, records):
    with open(path, "w") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")


def read_jsonl(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
