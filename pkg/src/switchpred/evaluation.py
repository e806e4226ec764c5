"""Rank fusion, AUC, proportional validation split and dataset counts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, FormatError, InvalidInputError, NumericError
from .logs import Session


class RankedPrediction:
    """Scored sessions with 1-based ranks, rank 1 = highest score.

    Equal scores are ordered by ascending session ID so ranks always form
    a permutation of ``1..n``.
    """

    def __init__(self, entries: Iterable[tuple[int, float]]):
        entries = list(entries)
        order = sorted(entries, key=lambda e: (-e[1], e[0]))
        self.entries = order
        self.rank = {sid: r for r, (sid, _) in enumerate(order, 1)}
        if len(self.rank) != len(entries):
            raise InvalidInputError("duplicate session IDs in ranking")

    def __len__(self):
        return len(self.entries)

    @property
    def session_ids(self) -> set[int]:
        return set(self.rank)

    def scores(self) -> dict[int, float]:
        return dict(self.entries)


def harmonic_rank_score(ranks: Sequence[int]) -> float:
    """Harmonic mean of a session's ranks across models."""
    return len(ranks) / sum(1.0 / r for r in ranks)


def rank_fuse(rankings: Sequence[RankedPrediction]) -> RankedPrediction:
    """Fuse rankings by the harmonic mean of ranks.

    Lower harmonic-mean rank means more switch-like.  The fused entries
    carry ``1 / rank_score`` as their score so that higher is still
    better and the result can go straight into :func:`auc`.
    """
    if not rankings:
        raise InvalidInputError("nothing to fuse")
    ids = rankings[0].session_ids
    for r in rankings[1:]:
        if r.session_ids != ids:
            diff = sorted(ids ^ r.session_ids)
            raise InvalidInputError(f"rankings cover different sessions; symmetric difference: {diff[:20]}")
    return RankedPrediction(
        (sid, 1.0 / harmonic_rank_score([r.rank[sid] for r in rankings])) for sid in sorted(ids)
    )


def auc(scores: Iterable[tuple[int, float]], labels: Mapping[int, int] | Iterable[tuple[int, int]]) -> float:
    """Area under the ROC curve via the tie-aware Mann-Whitney rank sum.

    Ties between a positive and a negative count one half.  Raises
    :class:`NumericError` when only one class is present.
    """
    labels = dict(labels)
    scores = list(scores)
    try:
        y = np.array([labels[sid] for sid, _ in scores])
    except KeyError as exc:
        raise InvalidInputError(f"no label for session {exc.args[0]}") from None
    x = np.array([s for _, s in scores], dtype=np.float64)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise NumericError("AUC undefined: need at least one positive and one negative")
    ranks = rankdata(x, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def in_validation(session_id: int, modulus: int = 10, residue: int = 1) -> bool:
    return session_id % modulus == residue


def check_split_params(modulus: int, residue: int) -> None:
    if modulus < 2:
        raise ConfigError(f"modulus must be >= 2, got {modulus}")
    if not 0 <= residue < modulus:
        raise ConfigError(f"residue must be in [0, {modulus}), got {residue}")


def proportional_split(sessions: Iterable[Session], modulus: int = 10, residue: int = 1):
    """Split by session ID residue: validation gets IDs ``== residue (mod modulus)``."""
    check_split_params(modulus, residue)
    train, valid = [], []
    for s in sessions:
        (valid if in_validation(s.session_id, modulus, residue) else train).append(s)
    return train, valid


class DatasetStats(NamedTuple):
    sessions: int
    users: int
    queries: int
    urls: int


def dataset_stats(sessions: Iterable[Session]) -> DatasetStats:
    n = 0
    users, queries, urls = set(), set(), set()
    for s in sessions:
        n += 1
        users.add(s.user_id)
        for q in s.queries:
            queries.add(q.query_id)
            urls.update(q.urls)
        urls.update(c.url_id for c in s.clicks)
    return DatasetStats(n, len(users), len(queries), len(urls))


# -- score files ---------------------------------------------------------------

def write_scores(fh, entries: Iterable[tuple[int, float]]) -> None:
    """Submission format: ``session_id<TAB>score`` per line, no header."""
    for sid, score in entries:
        fh.write(f"{sid}\t{score!r}\n")


def read_scores(fh) -> list[tuple[int, float]]:
    """Read the first two columns of a score or prediction file; a header
    line is skipped."""
    out = []
    for line_no, line in enumerate(fh, 1):
        fields = line.rstrip("\n").split("\t")
        if line_no == 1 and not fields[0].isdigit():
            continue
        if len(fields) < 2:
            raise FormatError(f"line {line_no}: expected session_id and score")
        try:
            out.append((int(fields[0]), float(fields[1])))
        except ValueError as exc:
            raise FormatError(f"line {line_no}: {exc}") from None
    return out


@dataclass
class Evaluation:
    auc: float
    n: int
    positives: int
    mean_score: float
    positive_rate: float


def evaluate(scores: Sequence[tuple[int, float]], labels: Mapping[int, int]) -> Evaluation:
    value = auc(scores, labels)
    pos = sum(labels[sid] == 1 for sid, _ in scores)
    return Evaluation(
        auc=value,
        n=len(scores),
        positives=pos,
        mean_score=float(np.mean([s for _, s in scores])),
        positive_rate=pos / len(scores),
    )
