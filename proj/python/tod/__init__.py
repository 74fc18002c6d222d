"""Retrieval-based response ranking for task-oriented dialogue."""

import json

from ._tod import (
    CorpusError,
    MinerError,
    RegistryError,
    RequestError,
    TrainError,
    content_lemmas,
    coverage,
    generate_corpus,
    lemmatize,
    mine,
    sample_gumbel,
    sentence_bleu,
    sft_examples,
    split_sentences,
    tokenize,
)
from ._tod import _Ranker
from ._tod import train_sst as _train_sst

__all__ = [
    "CorpusError",
    "MinerError",
    "Ranker",
    "RegistryError",
    "RequestError",
    "TrainError",
    "content_lemmas",
    "coverage",
    "generate_corpus",
    "lemmatize",
    "mine",
    "sample_gumbel",
    "sentence_bleu",
    "sft_examples",
    "split_sentences",
    "tokenize",
    "train_sst",
]


def train_sst(corpus, out, **kwargs):
    """Trains a ranker on a corpus file and returns the per-epoch metrics."""
    return [json.loads(line) for line in _train_sst(corpus, out, **kwargs)]


class Ranker:
    """In-process ranking service over a checkpoint and a template pool."""

    def __init__(self, checkpoint, pool, temperature=1.0, feedback_log=None):
        self._impl = _Ranker(str(checkpoint), str(pool), temperature,
                             None if feedback_log is None else str(feedback_log))

    def rank(self, session_id, turns, features=None, k=4, explore=False, temperature=None):
        request = {
            "session_id": session_id,
            "turns": [{"speaker": s, "text": t} for s, t in turns],
            "features": features or {},
            "k": k,
            "explore": explore,
        }
        if temperature is not None:
            request["temperature"] = temperature
        return json.loads(self._impl.rank(json.dumps(request)))

    def feedback(self, event):
        return self._impl.feedback(json.dumps(event))

    def templates(self, query, limit=20):
        return json.loads(self._impl.templates(query, limit))["templates"]
