"""Finite-world verification suites, synthetic data and encoder training."""

import json

from . import _idglab
from ._idglab import IdgError, bayes_risk, gen_synthetic, idg_risk

__all__ = [
    "IdgError",
    "bayes_risk",
    "gen_synthetic",
    "idg_risk",
    "ingest",
    "random_world",
    "run_suite",
    "train_probe",
    "verify_theorem1",
]


def random_world(seed, n_domains=2, n_inputs=4, n_labels=2, loss="zero_one"):
    """World as a JSON string, ready for the other world functions."""
    return _idglab.random_world(seed, n_domains, n_inputs, n_labels, loss)


def verify_theorem1(world, n_codes):
    return json.loads(_idglab.verify_theorem1(world, n_codes))


def run_suite(name, worlds=100, seed=0, allow_invalid=False, jobs=1):
    return json.loads(_idglab.run_suite(name, worlds, seed, allow_invalid, jobs))


def ingest(text):
    return json.loads(_idglab.ingest(text))


def train_probe(csv, config=None, mode="worst", seeds=(0,), max_iters=3000):
    """Train on CSV text with a config dict (TrainConfig fields) and probe all pairs."""
    out = _idglab.train_probe(csv, json.dumps(config or {}), mode, list(seeds), max_iters)
    return json.loads(out)
