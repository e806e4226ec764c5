"""Session feature extraction and hashed 1-in-N encoding.

Every feature is a ``(family, value)`` token.  The twenty families are
numbered as in the feature table used for selection experiments, so CLI
users can enable them by number.  Tokens are hashed into 64-bit IDs by
:func:`feature_id`; the model only ever sees those IDs.

Extraction always works on the switch-masked session: switch records and
the switch type never reach a feature.  The one exception is the
leave-one-out correction applied to sessions that were themselves
counted into :class:`CorpusStats` (``in_stats=True``), which removes the
session's own contribution to the corpus counts.
"""

from __future__ import annotations

import hashlib
import json
from bisect import bisect_right
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from itertools import starmap
from typing import Iterable, Optional

from .adpredictor import FeatureVector
from .errors import ConfigError, FormatError
from .logs import EVENT_LETTER, Click, Query, Session, SwitchType

FAMILIES = {
    1: "UserID",
    2: "User_switch_ratio",
    3: "QueryID",
    4: "Query_Count",
    5: "Query_Duplicate",
    6: "QueryID_Popularity",
    7: "URLID",
    8: "Query_URLid_List",
    9: "URL_Popularity",
    10: "ClickedURL_Filtered",
    11: "Action_Sequence",
    12: "Pattern_4gram_Normed",
    13: "Pattern_5gram_Normed",
    14: "Pattern_6gram_Normed",
    15: "Pattern_7gram_Normed",
    16: "QueryID_Time",
    17: "Query_Click_Interval",
    18: "Click_NextQuery_Interval",
    19: "Click_Position_Count",
    20: "MRR",
}
ALL_FAMILIES = frozenset(FAMILIES.values())
NGRAM_SIZES = (4, 5, 6, 7)

UNKNOWN = "unknown"
NO_CLICK = "no-click"


# A feature token is a plain ``(family, value)`` pair; extraction builds
# hundreds per session, so no wrapper class.
Feature = tuple


def parse_family_list(text: str) -> frozenset[str]:
    """``"1,3,7,16"`` or family names -> set of family names."""
    out = set()
    for part in filter(None, (p.strip() for p in text.split(","))):
        if part.isdigit():
            if int(part) not in FAMILIES:
                raise ConfigError(f"no feature family numbered {part}")
            out.add(FAMILIES[int(part)])
        elif part in ALL_FAMILIES:
            out.add(part)
        else:
            raise ConfigError(f"unknown feature family {part!r}")
    return frozenset(out)


def _geometric_edges():
    return (0,) + tuple(2**k for k in range(15))


@dataclass(frozen=True)
class BucketingConfig:
    """Bucket boundaries and caps.  A value ``x`` falls in bucket ``k``
    when ``edges[k] <= x < edges[k+1]``; the last bucket is unbounded."""

    time_bucket_edges: tuple = field(default_factory=_geometric_edges)
    interval_bucket_edges: tuple = field(default_factory=_geometric_edges)
    popularity_bucket_edges: tuple = (0, 1, 10, 100, 1_000, 10_000, 100_000, 1_000_000)
    ratio_bucket_edges: tuple = tuple(k / 10 for k in range(10))
    ngram_bins: int = 8
    url_top_k: int = 10
    query_count_cap: int = 20
    sequence_cap: int = 50

    def __post_init__(self):
        for name in ("time_bucket_edges", "interval_bucket_edges",
                     "popularity_bucket_edges", "ratio_bucket_edges"):
            edges = tuple(getattr(self, name))
            object.__setattr__(self, name, edges)
            if not edges or edges[0] != 0:
                raise ConfigError(f"{name} must start at 0")
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise ConfigError(f"{name} must be strictly ascending")
        for name in ("ngram_bins", "url_top_k", "query_count_cap", "sequence_cap"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "BucketingConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown bucketing keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def bucket(x, edges) -> int:
    """Index of the bucket holding ``x``; -1 for values below the first edge."""
    return bisect_right(edges, x) - 1


# -- corpus statistics -------------------------------------------------------

STATS_VERSION = 1


@dataclass
class CorpusStats:
    """Counts over the training period.

    ``query_frequency`` and ``url_frequency`` count sessions in which the
    query was issued / the URL was shown, not raw occurrences.
    """

    query_frequency: Counter = field(default_factory=Counter)
    url_frequency: Counter = field(default_factory=Counter)
    user_switch_counts: dict = field(default_factory=lambda: defaultdict(Counter))

    def add(self, s: Session) -> None:
        qs = s.queries
        self.query_frequency.update({q.query_id for q in qs})
        self.url_frequency.update({u for q in qs for u in q.urls})
        if s.switch_type is not None:
            self.user_switch_counts[s.user_id][s.switch_type] += 1

    def query_count(self, query_id: int) -> int:
        return self.query_frequency.get(query_id, 0)

    def url_count(self, url_id: int) -> int:
        return self.url_frequency.get(url_id, 0)

    def user_counts(self, user_id: int) -> Optional[Counter]:
        return self.user_switch_counts.get(user_id)

    def to_json(self) -> str:
        users = {
            str(u): {t.value: c[t] for t in SwitchType if c[t]}
            for u, c in sorted(self.user_switch_counts.items())
        }
        doc = {
            "version": STATS_VERSION,
            "query_frequency": {str(k): v for k, v in sorted(self.query_frequency.items())},
            "url_frequency": {str(k): v for k, v in sorted(self.url_frequency.items())},
            "user_switch_counts": users,
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "CorpusStats":
        try:
            doc = json.loads(text)
            if doc.get("version") != STATS_VERSION:
                raise FormatError(f"unsupported corpus stats version {doc.get('version')!r}")
            stats = cls()
            stats.query_frequency.update({int(k): int(v) for k, v in doc["query_frequency"].items()})
            stats.url_frequency.update({int(k): int(v) for k, v in doc["url_frequency"].items()})
            for u, counts in doc["user_switch_counts"].items():
                stats.user_switch_counts[int(u)].update(
                    {SwitchType(t): int(c) for t, c in counts.items()}
                )
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise FormatError(f"malformed corpus stats: {exc}") from exc
        return stats


def build_corpus_stats(sessions: Iterable[Session]) -> CorpusStats:
    stats = CorpusStats()
    for s in sessions:
        stats.add(s)
    return stats


class _LeaveOneOut:
    """Read-only view of ``stats`` with one counted session taken out."""

    def __init__(self, stats: CorpusStats, s: Session):
        self._stats = stats
        self._queries = {q.query_id for q in s.queries}
        self._urls = {u for q in s.queries for u in q.urls}
        self._user = s.user_id
        self._type = s.switch_type

    def query_count(self, query_id):
        return self._stats.query_count(query_id) - (query_id in self._queries)

    def url_count(self, url_id):
        return self._stats.url_count(url_id) - (url_id in self._urls)

    def user_counts(self, user_id):
        counts = self._stats.user_counts(user_id)
        if counts is None or user_id != self._user or self._type is None:
            return counts
        counts = counts.copy()
        counts[self._type] -= 1
        return counts if sum(counts.values()) > 0 else None


# -- extractors --------------------------------------------------------------

def _popularity_token(count, cfg):
    return UNKNOWN if count <= 0 else bucket(count, cfg.popularity_bucket_edges)


def extract_user_features(s: Session, stats, cfg: BucketingConfig) -> list[Feature]:
    out = [("UserID", s.user_id)]
    counts = stats.user_counts(s.user_id)
    total = sum(counts.values()) if counts else 0
    for t in SwitchType:
        if total == 0:
            out.append(("User_switch_ratio", f"{t.value}:{UNKNOWN}"))
        else:
            ratio = counts[t] / total
            out.append(("User_switch_ratio", f"{t.value}:{bucket(ratio, cfg.ratio_bucket_edges)}"))
    return out


def extract_query_features(s: Session, stats, cfg: BucketingConfig) -> list[Feature]:
    queries = s.queries
    out = [("QueryID", q.query_id) for q in queries]
    out.append(("Query_Count", min(len(queries), cfg.query_count_cap)))
    repeats = Counter(q.query_id for q in queries)
    out.append(("Query_Duplicate", min(max(repeats.values(), default=0), cfg.query_count_cap)))
    out.extend(
        ("QueryID_Popularity", _popularity_token(stats.query_count(q.query_id), cfg))
        for q in queries
    )
    return out


def extract_url_features(s: Session, stats, cfg: BucketingConfig) -> list[Feature]:
    out = []
    shown = {}
    k = cfg.url_top_k
    for q in s.queries:
        qid = q.query_id
        for pos, url in enumerate(q.urls[:k], 1):
            shown[url] = None
            out.append(("Query_URLid_List", f"{qid}:{url}:{pos}"))
    out.extend(("URLID", url) for url in shown)
    popularity = {_popularity_token(stats.url_count(url), cfg) for url in shown}
    out.extend(("URL_Popularity", tok) for tok in sorted(popularity, key=str))
    out.extend(("ClickedURL_Filtered", c.url_id) for c in s.clicks)
    return out


def action_sequence(s: Session) -> str:
    """Session as a string of record-type letters, led by ``M``.

    Events in one 100-unit window are concatenated in time order and
    empty windows are dropped, so the string is the event order itself.
    """
    return "M" + "".join(EVENT_LETTER[type(e)] for e in s.events)


def _cap_sequence(seq, cap):
    if len(seq) <= cap:
        return seq
    head = cap // 2
    return f"{seq[:head]}~{seq[len(seq) - (cap - head):]}"


def ngram_counts(seq: str, n: int) -> Counter:
    return Counter(seq[i:i + n] for i in range(len(seq) - n + 1))


def extract_sequence_features(s: Session, cfg: BucketingConfig) -> list[Feature]:
    seq = action_sequence(s)
    out = [("Action_Sequence", _cap_sequence(seq, cfg.sequence_cap))]
    for n in NGRAM_SIZES:
        counts = ngram_counts(seq, n)
        total = sum(counts.values())
        for gram, c in sorted(counts.items()):
            b = min(int(c / total * cfg.ngram_bins), cfg.ngram_bins - 1)
            out.append((f"Pattern_{n}gram_Normed", f"{gram}:{b}"))
    return out


def _serp_index(s: Session):
    """serp_id -> first query showing it, and serp_id -> its clicks."""
    serps: dict[int, Query] = {}
    clicks: dict[int, list[Click]] = defaultdict(list)
    for e in s.events:
        if type(e) is Query:
            serps.setdefault(e.serp_id, e)
        elif type(e) is Click:
            clicks[e.serp_id].append(e)
    return serps, clicks


def extract_timeline_features(s: Session, cfg: BucketingConfig) -> list[Feature]:
    queries = s.queries
    serps, clicks = _serp_index(s)
    tedges, iedges = cfg.time_bucket_edges, cfg.interval_bucket_edges
    out = [("QueryID_Time", bucket(q.time_passed, tedges)) for q in queries]
    for serp_id, q in serps.items():
        cs = clicks.get(serp_id)
        if cs:
            out.append(("Query_Click_Interval", bucket(cs[0].time_passed - q.time_passed, iedges)))
    for q, nxt in zip(queries, queries[1:]):
        before = [c.time_passed for c in clicks.get(q.serp_id, ()) if c.time_passed <= nxt.time_passed]
        if before:
            out.append(("Click_NextQuery_Interval", bucket(nxt.time_passed - before[-1], iedges)))
    return out


def click_positions(s: Session) -> tuple[dict[int, list[int]], int]:
    """1-based positions of clicks per SERP, plus the number of clicks
    whose URL is not on their SERP (those are skipped)."""
    serps, clicks = _serp_index(s)
    positions: dict[int, list[int]] = {serp: [] for serp in serps}
    skipped = 0
    for serp_id, cs in clicks.items():
        q = serps.get(serp_id)
        for c in cs:
            if q is None or c.url_id not in q.urls:
                skipped += 1
            else:
                positions[serp_id].append(q.urls.index(c.url_id) + 1)
    return positions, skipped


def extract_position_features(s: Session, cfg: BucketingConfig) -> list[Feature]:
    positions, _ = click_positions(s)
    out = [
        ("Click_Position_Count", sum(5 <= p <= 10 for p in ps))
        for ps in positions.values()
    ]
    flat = [p for ps in positions.values() for p in ps]
    if flat:
        mrr = sum(1.0 / p for p in flat) / len(flat)
        out.append(("MRR", bucket(mrr, cfg.ratio_bucket_edges)))
    else:
        out.append(("MRR", NO_CLICK))
    return out


# -- encoding ----------------------------------------------------------------

@lru_cache(maxsize=1 << 20)
def feature_id(family: str, value) -> int:
    """64-bit ID of a token: BLAKE2b with an 8-byte digest over the UTF-8
    text ``family + "\\x1f" + str(value)``, read as a big-endian unsigned
    integer."""
    digest = hashlib.blake2b(f"{family}\x1f{value}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def encode(features: Iterable[Feature]) -> FeatureVector:
    return FeatureVector(starmap(feature_id, features))


class FeatureExtractor:
    """Bundles corpus stats, bucketing and the enabled families."""

    def __init__(
        self,
        stats: CorpusStats,
        config: Optional[BucketingConfig] = None,
        families: Iterable[str] = ALL_FAMILIES,
    ):
        self.stats = stats
        self.config = config or BucketingConfig()
        self.families = frozenset(families)
        unknown = self.families - ALL_FAMILIES
        if unknown:
            raise ConfigError(f"unknown feature families: {sorted(unknown)}")

    def features(self, s: Session, in_stats: bool = False) -> list[Feature]:
        stats = _LeaveOneOut(self.stats, s) if in_stats else self.stats
        s = s.masked()
        cfg = self.config
        out = extract_user_features(s, stats, cfg)
        out += extract_query_features(s, stats, cfg)
        out += extract_url_features(s, stats, cfg)
        out += extract_sequence_features(s, cfg)
        out += extract_timeline_features(s, cfg)
        out += extract_position_features(s, cfg)
        if self.families != ALL_FAMILIES:
            out = [f for f in out if f[0] in self.families]
        return out

    def vector(self, s: Session, in_stats: bool = False) -> FeatureVector:
        return encode(self.features(s, in_stats))
