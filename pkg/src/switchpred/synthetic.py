"""Synthetic search logs with a known probit ground truth.

Behaviour (queries, result lists, clicks, timing) is sampled first and
does not depend on the label.  Each session then gets two latent probit
scores, one for switches seen through SERP links and one for switches
seen by the toolbar (toolbar users only):

    score_P = offset + user_P + w_rare * rare_query + w_deep * deep_click
    score_B = offset + w_toolbar + user_B + w_gap * long_gap + w_rare_b * rare_query

and switches if ``score + N(0, beta^2) > 0``.  Both channels firing gives
type H.  ``offset`` is chosen by bisection so the expected switch rate
equals ``switch_rate``.  All randomness comes from one seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import IO, Optional

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError
from .logs import Click, Query, Session, Switch, SwitchType, write_sessions

N_POSITIONS = 10


@dataclass(frozen=True)
class GeneratorParams:
    n_sessions: int = 10_000
    n_users: int = 1_000
    n_queries: int = 4_000
    n_urls: int = 20_000
    seed: int = 42
    switch_rate: float = 0.25
    toolbar_share: float = 0.6
    beta: float = 1.0
    user_sd: float = 1.3
    user_channel_sd: float = 0.6
    w_rare: float = 0.8
    w_deep: float = 1.2
    w_gap: float = 1.6
    w_rare_b: float = 0.3
    w_toolbar: float = 0.6
    rare_rank: int = 400
    long_gap: int = 1_000
    mean_extra_queries: float = 1.2
    zipf_exponent: float = 1.1
    url_zipf_exponent: float = 0.8

    def __post_init__(self):
        if self.n_sessions < 0 or self.n_users < 1 or self.n_queries < 1 or self.n_urls < N_POSITIONS:
            raise ConfigError("generator sizes must be positive (n_urls >= 10, n_sessions >= 0)")
        if not 0.0 < self.switch_rate < 1.0:
            raise ConfigError("switch_rate must be in (0, 1)")
        if not 0.0 <= self.toolbar_share <= 1.0:
            raise ConfigError("toolbar_share must be in [0, 1]")
        if self.beta <= 0 or self.user_sd < 0 or self.user_channel_sd < 0:
            raise ConfigError("beta must be positive and standard deviations non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")


@dataclass
class GroundTruth:
    params: GeneratorParams
    offset: float
    user_p: np.ndarray
    user_b: np.ndarray
    toolbar: np.ndarray
    p_switch: np.ndarray
    expected_rate: float
    switch_types: list

    def to_json(self) -> str:
        doc = {
            "params": asdict(self.params),
            "offset": self.offset,
            "expected_switch_rate": self.expected_rate,
            "weights": {
                "rare_query": self.params.w_rare,
                "deep_click": self.params.w_deep,
                "long_gap": self.params.w_gap,
                "rare_query_toolbar": self.params.w_rare_b,
                "toolbar_offset": self.params.w_toolbar,
            },
            "users": [
                {"user_id": u + 1, "serp": float(p), "toolbar": float(b), "has_toolbar": bool(t)}
                for u, (p, b, t) in enumerate(zip(self.user_p, self.user_b, self.toolbar))
            ],
        }
        return json.dumps(doc, indent=1)

    def write_labels(self, fh: IO[str], sessions) -> None:
        fh.write("session_id\tswitch_type\tp_switch\n")
        for s, p in zip(sessions, self.p_switch):
            fh.write(f"{s.session_id}\t{s.switch_type.value}\t{float(p)!r}\n")


def _zipf_weights(n, exponent):
    w = 1.0 / np.arange(1, n + 1) ** exponent
    return w / w.sum()


class _Behaviour:
    """Label-free part of a session plus the summary the ground truth reads."""

    __slots__ = ("user", "events", "rare_query", "deep_click", "long_gap")


def _sample_behaviour(p: GeneratorParams, rng: np.random.Generator):
    user_activity = rng.lognormal(0.0, 0.6, p.n_users)
    user_gap = rng.lognormal(math.log(180.0), 0.7, p.n_users)
    user_depth = rng.beta(1.5, 4.0, p.n_users)
    query_cdf = np.cumsum(_zipf_weights(p.n_queries, p.zipf_exponent))
    # popular URLs recur across many result lists
    url_weights = _zipf_weights(p.n_urls, p.url_zipf_exponent)
    url_lists = [
        (rng.choice(p.n_urls, N_POSITIONS, replace=False, p=url_weights) + 1).tolist()
        for _ in range(p.n_queries)
    ]
    # ids are shuffled so popularity is not visible in the raw id
    query_ids = (rng.permutation(p.n_queries) + 1).tolist()
    position_base = 0.45 / np.arange(1, N_POSITIONS + 1) ** 0.8

    # Draw everything in bulk, then walk the sessions.
    n = p.n_sessions
    users = np.searchsorted(np.cumsum(user_activity / user_activity.sum()), rng.random(n), side="right")
    users = np.minimum(users, p.n_users - 1)
    n_queries = 1 + np.minimum(rng.poisson(p.mean_extra_queries, n), 7)
    total = int(n_queries.sum())
    ranks = np.minimum(np.searchsorted(query_cdf, rng.random(total), side="right"), p.n_queries - 1)
    rare_serp = ranks >= p.rare_rank
    q_users = np.repeat(users, n_queries)
    click_prob = np.clip(position_base[None, :] + 0.25 * user_depth[q_users][:, None], 0.0, 0.95)
    click_prob *= np.where(rare_serp, 0.4, 0.6)[:, None]
    clicked = rng.random((total, N_POSITIONS)) < click_prob
    click_delay = (1 + rng.exponential(40.0, (total, 3)).astype(np.int64)).tolist()
    next_delay = (1 + (rng.exponential(1.0, total) * user_gap[q_users]).astype(np.int64)).tolist()
    clicked_pos = [np.nonzero(row)[0][:3].tolist() for row in clicked]
    ranks = ranks.tolist()
    rare_serp = rare_serp.tolist()

    sessions = []
    k = 0
    for u, nq in zip(users.tolist(), n_queries.tolist()):
        b = _Behaviour()
        b.user = u
        events = []
        t = 0
        rare = deep = gap = False
        for serp in range(nq):
            r = ranks[k]
            urls = tuple(url_lists[r])
            events.append(("Q", t, serp, query_ids[r], urls))
            rare |= rare_serp[k]
            positions = clicked_pos[k]
            for j, pos in enumerate(positions):
                t += click_delay[k][j]
                events.append(("C", t, serp, urls[pos]))
                # deep = 1-based position 5..10
                deep |= pos >= 4
            delay = next_delay[k]
            if positions and serp < nq - 1 and delay > p.long_gap:
                gap = True
            t += delay
            k += 1
        b.events = events
        b.rare_query, b.deep_click, b.long_gap = rare, deep, gap
        sessions.append(b)
    return sessions


def _channel_probs(p, offset, user_p, user_b, toolbar, feats):
    users, rare, deep, gap = feats
    s_p = offset + user_p[users] + p.w_rare * rare + p.w_deep * deep
    s_b = offset + p.w_toolbar + user_b[users] + p.w_gap * gap + p.w_rare_b * rare
    prob_p = ndtr(s_p / p.beta)
    prob_b = ndtr(s_b / p.beta) * toolbar[users]
    return s_p, s_b, prob_p, prob_b


def _calibrate_offset(p, user_p, user_b, toolbar, feats):
    def rate(offset):
        _, _, pp, pb = _channel_probs(p, offset, user_p, user_b, toolbar, feats)
        return float(np.mean(1.0 - (1.0 - pp) * (1.0 - pb)))

    lo, hi = -20.0, 20.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rate(mid) < p.switch_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate(params: GeneratorParams) -> tuple[list[Session], GroundTruth]:
    """Sessions (with switch records and types) and their ground truth."""
    p = params
    rng = np.random.default_rng(p.seed)
    shared = rng.normal(0.0, p.user_sd, p.n_users)
    user_p = shared + rng.normal(0.0, p.user_channel_sd, p.n_users)
    user_b = shared + rng.normal(0.0, p.user_channel_sd, p.n_users)
    toolbar = (rng.random(p.n_users) < p.toolbar_share).astype(np.float64)

    behaviour = _sample_behaviour(p, rng)
    feats = (
        np.array([b.user for b in behaviour], dtype=np.int64),
        np.array([b.rare_query for b in behaviour], dtype=np.float64),
        np.array([b.deep_click for b in behaviour], dtype=np.float64),
        np.array([b.long_gap for b in behaviour], dtype=np.float64),
    )
    if p.n_sessions:
        offset = _calibrate_offset(p, user_p, user_b, toolbar, feats)
    else:
        offset = 0.0
    s_p, s_b, prob_p, prob_b = _channel_probs(p, offset, user_p, user_b, toolbar, feats)
    fired_p = s_p + rng.normal(0.0, p.beta, p.n_sessions) > 0
    fired_b = (s_b + rng.normal(0.0, p.beta, p.n_sessions) > 0) & (toolbar[feats[0]] > 0)
    p_switch = 1.0 - (1.0 - prob_p) * (1.0 - prob_b)

    sessions = []
    types = []
    for i, b in enumerate(behaviour):
        sid = i + 1
        st = (
            SwitchType.H if fired_p[i] and fired_b[i]
            else SwitchType.P if fired_p[i]
            else SwitchType.B if fired_b[i]
            else SwitchType.N
        )
        events = []
        for e in b.events:
            if e[0] == "Q":
                events.append(Query(sid, e[1], e[2], e[3], e[4]))
            else:
                events.append(Click(sid, e[1], e[2], e[3]))
        if st.switched:
            at = events[int(rng.integers(len(events)))].time_passed
            events.append(Switch(sid, at + 1))
            if st is SwitchType.H:
                events.append(Switch(sid, at + 2))
            events.sort(key=lambda e: e.time_passed)
        day = 1 + (i * 30) // max(p.n_sessions, 1)
        sessions.append(Session(sid, day, b.user + 1, st, tuple(events)))
        types.append(st)

    truth = GroundTruth(p, offset, user_p, user_b, toolbar, p_switch, float(np.mean(p_switch)) if p.n_sessions else 0.0, types)
    return sessions, truth


def write_synthetic(params: GeneratorParams, log_fh: IO[str], truth_fh: Optional[IO[str]] = None,
                    labels_fh: Optional[IO[str]] = None) -> GroundTruth:
    sessions, truth = generate(params)
    write_sessions(sessions, log_fh)
    if truth_fh is not None:
        truth_fh.write(truth.to_json())
    if labels_fh is not None:
        truth.write_labels(labels_fh, sessions)
    return truth
