"""Search log records and session assembly.

Wire format: one record per line, tab-separated, LF line endings::

    M  <session> <day> M <user> <switch_type>
    Q  <session> <time_passed> Q <serp> <query> <url,url,...>
    C  <session> <time_passed> C <serp> <url>
    S  <session> <time_passed> S

(the leading letter above is only a label; the third column is the
record type).  Files may be gzip-compressed.  Each session's records
are contiguous and start with its metadata record.
"""

from __future__ import annotations

import gzip
import io
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import IO, Iterable, Iterator, Optional, Union

from .errors import AssemblyError, FormatError, InvalidInputError, ParseError


class SwitchType(str, Enum):
    N = "N"  # no monitored switch
    P = "P"  # via SERP links
    B = "B"  # via toolbar
    H = "H"  # both

    @property
    def switched(self) -> bool:
        return self is not SwitchType.N


@dataclass(frozen=True)
class Metadata:
    session_id: int
    day: int
    user_id: int
    switch_type: SwitchType


@dataclass(frozen=True)
class Query:
    session_id: int
    time_passed: int
    serp_id: int
    query_id: int
    urls: tuple[int, ...]


@dataclass(frozen=True)
class Click:
    session_id: int
    time_passed: int
    serp_id: int
    url_id: int


@dataclass(frozen=True)
class Switch:
    session_id: int
    time_passed: int


LogRecord = Union[Metadata, Query, Click, Switch]
Event = Union[Query, Click, Switch]

EVENT_LETTER = {Query: "Q", Click: "C", Switch: "S"}


def _int(text, line_no, name):
    if not (text.isascii() and text.isdigit()):
        raise ParseError(line_no, f"{name} is not a non-negative integer: {text!r}")
    return int(text)


def parse_record(line: str, line_no: int = 0) -> LogRecord:
    fields = line.rstrip("\n").split("\t")
    if len(fields) < 3:
        raise ParseError(line_no, f"expected at least 3 fields, got {len(fields)}")
    kind = fields[2]
    expected = {"M": 5, "Q": 6, "C": 5, "S": 3}.get(kind)
    if expected is None:
        raise ParseError(line_no, f"unknown record type {kind!r}")
    if len(fields) != expected:
        raise ParseError(line_no, f"{kind} record needs {expected} fields, got {len(fields)}")

    session_id = _int(fields[0], line_no, "SessionID")
    if kind == "M":
        day = _int(fields[1], line_no, "Day")
        if not 1 <= day <= 30:
            raise ParseError(line_no, f"day {day} outside 1..30")
        try:
            switch_type = SwitchType(fields[4])
        except ValueError:
            raise ParseError(line_no, f"unknown switch type {fields[4]!r}") from None
        return Metadata(session_id, day, _int(fields[3], line_no, "UserID"), switch_type)

    time_passed = _int(fields[1], line_no, "TimePassed")
    if kind == "S":
        return Switch(session_id, time_passed)
    serp_id = _int(fields[3], line_no, "SERPID")
    if kind == "C":
        return Click(session_id, time_passed, serp_id, _int(fields[4], line_no, "URLID"))
    urls = tuple(_int(u, line_no, "URLID") for u in fields[5].split(","))
    return Query(session_id, time_passed, serp_id, _int(fields[4], line_no, "QueryID"), urls)


def format_record(rec: LogRecord) -> str:
    if isinstance(rec, Metadata):
        return f"{rec.session_id}\t{rec.day}\tM\t{rec.user_id}\t{rec.switch_type.value}"
    if isinstance(rec, Query):
        urls = ",".join(map(str, rec.urls))
        return f"{rec.session_id}\t{rec.time_passed}\tQ\t{rec.serp_id}\t{rec.query_id}\t{urls}"
    if isinstance(rec, Click):
        return f"{rec.session_id}\t{rec.time_passed}\tC\t{rec.serp_id}\t{rec.url_id}"
    if isinstance(rec, Switch):
        return f"{rec.session_id}\t{rec.time_passed}\tS"
    raise TypeError(f"not a log record: {rec!r}")


@dataclass
class ParseStats:
    lines: int = 0
    skipped: int = 0


def open_log(path, mode="rt"):
    """Open a plain or gzip-compressed log by sniffing the magic bytes."""
    with open(path, "rb") as fh:
        gz = fh.read(2) == b"\x1f\x8b"
    if "r" not in mode:
        raise ValueError("open_log is read-only")
    if gz:
        return gzip.open(path, mode, encoding="utf-8", newline="\n") if "t" in mode else gzip.open(path, mode)
    return open(path, mode, encoding="utf-8", newline="\n") if "t" in mode else open(path, mode)


def iter_records(
    lines: Iterable[str], permissive: bool = False, stats: Optional[ParseStats] = None
) -> Iterator[LogRecord]:
    """Parse lines lazily.  With ``permissive`` malformed lines are skipped
    and counted in ``stats`` instead of raising."""
    stats = stats if stats is not None else ParseStats()
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        stats.lines += 1
        try:
            yield parse_record(line, line_no)
        except ParseError:
            if not permissive:
                raise
            stats.skipped += 1


@dataclass(frozen=True)
class Session:
    session_id: int
    day: int
    user_id: int
    switch_type: Optional[SwitchType]
    events: tuple[Event, ...]
    unmatched_clicks: int = field(default=0, compare=False)

    @property
    def queries(self) -> list[Query]:
        return [e for e in self.events if type(e) is Query]

    @property
    def clicks(self) -> list[Click]:
        return [e for e in self.events if type(e) is Click]

    @property
    def switches(self) -> list[Switch]:
        return [e for e in self.events if type(e) is Switch]

    def masked(self) -> "Session":
        """Copy with switch records and the switch type removed, as test
        sessions are delivered."""
        events = tuple(e for e in self.events if type(e) is not Switch)
        return replace(self, switch_type=None, events=events)

    def records(self) -> Iterator[LogRecord]:
        if self.switch_type is None:
            raise InvalidInputError(f"session {self.session_id} has no switch type to write")
        yield Metadata(self.session_id, self.day, self.user_id, self.switch_type)
        yield from self.events


def build_session(meta: Metadata, events: Iterable[Event]) -> Session:
    ordered = tuple(sorted(events, key=lambda e: e.time_passed))
    seen_serps = set()
    unmatched = 0
    for e in ordered:
        if type(e) is Query:
            seen_serps.add(e.serp_id)
        elif type(e) is Click and e.serp_id not in seen_serps:
            unmatched += 1
    return Session(meta.session_id, meta.day, meta.user_id, meta.switch_type, ordered, unmatched)


def assemble_sessions(records: Iterable[LogRecord]) -> Iterator[Session]:
    """Group a record stream into sessions, one per metadata record."""
    meta = None
    events: list[Event] = []
    for rec in records:
        if type(rec) is Metadata:
            if meta is not None:
                yield build_session(meta, events)
            meta, events = rec, []
        elif meta is None or rec.session_id != meta.session_id:
            raise AssemblyError(rec.session_id, "event without a preceding metadata record")
        else:
            events.append(rec)
    if meta is not None:
        yield build_session(meta, events)


def read_sessions(path, permissive: bool = False, stats: Optional[ParseStats] = None) -> Iterator[Session]:
    with open_log(path) as fh:
        yield from assemble_sessions(iter_records(fh, permissive, stats))


def write_sessions(sessions: Iterable[Session], fh: IO[str]) -> int:
    n = 0
    for s in sessions:
        for rec in s.records():
            fh.write(format_record(rec))
            fh.write("\n")
        n += 1
    return n


def session_label(s: Session, target: Optional[SwitchType] = None) -> int:
    """+1/-1 label of a session.

    ``target=None`` is the binary switch/no-switch label.  With a target
    type the label is one-vs-rest, and blended ``H`` sessions count as
    positives for both the ``B`` and ``P`` targets.
    """
    if s.switch_type is None:
        raise InvalidInputError(f"session {s.session_id} has no switch type")
    return switch_label(s.switch_type, target)


def switch_label(st: SwitchType, target: Optional[SwitchType] = None) -> int:
    if target is None:
        return 1 if st.switched else -1
    if target is SwitchType.N:
        raise InvalidInputError("N is not a valid one-vs-rest target")
    if st is target or (st is SwitchType.H and target in (SwitchType.B, SwitchType.P)):
        return 1
    return -1


# Session cache: header (magic, version) then per session a u32 length and
# that many bytes of UTF-8 log lines.
CACHE_MAGIC = b"SWPS"
CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<4sH")
_LEN = struct.Struct("<I")


def dump_session_cache(sessions: Iterable[Session], fh: IO[bytes]) -> int:
    fh.write(_CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION))
    n = 0
    for s in sessions:
        buf = io.StringIO()
        write_sessions([s], buf)
        payload = buf.getvalue().encode("utf-8")
        fh.write(_LEN.pack(len(payload)))
        fh.write(payload)
        n += 1
    return n


def load_session_cache(fh: IO[bytes]) -> Iterator[Session]:
    header = fh.read(_CACHE_HEADER.size)
    if len(header) != _CACHE_HEADER.size:
        raise FormatError("session cache truncated in header")
    magic, version = _CACHE_HEADER.unpack(header)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise FormatError(f"unsupported session cache ({magic!r}, v{version})")
    while True:
        prefix = fh.read(_LEN.size)
        if not prefix:
            return
        if len(prefix) != _LEN.size:
            raise FormatError("session cache truncated in length prefix")
        (size,) = _LEN.unpack(prefix)
        payload = fh.read(size)
        if len(payload) != size:
            raise FormatError("session cache truncated in record")
        lines = payload.decode("utf-8").splitlines()
        sessions = list(assemble_sessions(iter_records(lines)))
        if len(sessions) != 1:
            raise FormatError("session cache record does not hold exactly one session")
        yield sessions[0]
