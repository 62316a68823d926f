"""Python access to the personadb engine.

Native calls return JSON text; the helpers here decode it.
"""

import json

from . import _core
from ._core import (
    Error,
    alignment_and_mse,
    collaborative_quota,
    micro_macro_f1,
    pearson,
    similarity,
    spearman,
)

__all__ = [
    "Error",
    "Session",
    "alignment_and_mse",
    "collaborative_quota",
    "micro_macro_f1",
    "pearson",
    "resolve_config",
    "run_cli",
    "similarity",
    "spearman",
    "synth",
]


def run_cli(args):
    """Run one command line. Returns (status, summary, error) with JSON decoded."""
    status, out, err = _core.run_cli([str(a) for a in args])
    return status, json.loads(out) if out.strip() else None, json.loads(err) if err.strip() else None


def synth(out_dir, overrides=()):
    return json.loads(_core.synth(str(out_dir), list(overrides)))


def resolve_config(config=None, overrides=()):
    resolved, digest = _core.resolve_config(None if config is None else str(config), list(overrides))
    return json.loads(resolved), digest


class Session:
    """An engine wired from one resolved config."""

    def __init__(self, config=None, overrides=()):
        self._s = _core.Session(None if config is None else str(config), list(overrides))

    @property
    def digest(self):
        return self._s.digest

    @property
    def config(self):
        return json.loads(self._s.config_json())

    def user_ids(self):
        return self._s.user_ids()

    def ingest(self, corpus):
        return self._s.ingest(str(corpus))

    def refine(self):
        return json.loads(self._s.refine())

    def join(self, user):
        return json.loads(self._s.join(user))

    def retrieve(self, user, query):
        return json.loads(self._s.retrieve(user, query))

    def evaluate(self, method=None):
        return json.loads(self._s.evaluate(method))
