"""Command ingestion: printable-string scans, pattern rules, pcap payloads, text lists."""

from __future__ import annotations

import enum
import io
import json
import logging
import os
import re
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

log = logging.getLogger(__name__)

DEFAULT_MIN_RUN = 5
PRINTABLE_FRACTION = 0.9
HTTP_PREFIXES = (b"GET", b"POST", b"HEAD", b"PUT", b"DELETE", b"OPTIONS", b"HTTP/")

_PRINTABLE = frozenset(range(0x20, 0x7F)) | {0x09}
_RUN_CACHE: dict[int, re.Pattern[bytes]] = {}


class Label(enum.Enum):
    MALICIOUS = "malicious"
    BENIGN = "benign"

    @property
    def y(self) -> int:
        return 1 if self is Label.MALICIOUS else 0

    @classmethod
    def parse(cls, value: "str | Label") -> "Label":
        if isinstance(value, Label):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown label {value!r}; expected malicious or benign") from None


class SourceKind(enum.Enum):
    BINARY_STRINGS = "binary_strings"
    PCAP_PAYLOAD = "pcap_payload"
    TEXT_LIST = "text_list"


class CorpusError(ValueError):
    """Bad input data: malformed capture, rule file or corpus record."""


@dataclass(frozen=True)
class Command:
    text: bytes
    label: Label
    source_id: str
    source_kind: SourceKind
    rule_id: str | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("command text must be non-empty")
        if not self.source_id:
            raise ValueError("source_id must be non-empty")

    @property
    def y(self) -> int:
        return self.label.y

    def to_json(self) -> dict:
        return {
            "text": self.text.decode("utf-8", errors="replace"),
            "label": self.label.value,
            "source_id": self.source_id,
            "source_kind": self.source_kind.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Command":
        try:
            return cls(
                text=obj["text"].encode("utf-8"),
                label=Label.parse(obj["label"]),
                source_id=obj["source_id"],
                source_kind=SourceKind(obj.get("source_kind", SourceKind.TEXT_LIST.value)),
            )
        except (KeyError, AttributeError) as exc:
            raise CorpusError(f"bad command record: {obj!r}") from exc


@dataclass(frozen=True)
class StringRun:
    bytes: bytes
    offset: int


class RuleKind(enum.Enum):
    PREFIX = "prefix"
    DELIMITED = "delimited"
    KEYWORD = "keyword"


@dataclass(frozen=True)
class ExtractionRule:
    rule_id: str
    kind: RuleKind
    anchor: str
    anchor_close: str | None = None
    min_len: int = 1
    _pattern: re.Pattern[bytes] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.anchor:
            raise ValueError(f"rule {self.rule_id}: empty anchor")
        if self.min_len < 1:
            raise ValueError(f"rule {self.rule_id}: min_len must be >= 1")
        a = re.escape(self.anchor.encode())
        if self.kind is RuleKind.DELIMITED:
            if not self.anchor_close:
                raise ValueError(f"rule {self.rule_id}: delimited rule needs anchor_close")
            c = re.escape(self.anchor_close.encode())
            pat = rb"(?<![A-Za-z0-9_])" + a + rb".*?" + c
        elif self.kind is RuleKind.PREFIX:
            pat = rb"^\s*" + a + rb".*"
        else:
            pat = rb"(?<![A-Za-z0-9_])" + a + rb"(?![A-Za-z0-9_])"
        object.__setattr__(self, "_pattern", re.compile(pat, re.DOTALL))

    def extract(self, run: bytes) -> bytes | None:
        """Command text this rule pulls out of ``run``, or None."""
        m = self._pattern.search(run)
        if m is None:
            return None
        if self.kind is RuleKind.DELIMITED:
            text = m.group(0)
        else:
            text = run.strip()
        return text if len(text) >= self.min_len else None

    def to_json(self) -> dict:
        obj = {"rule_id": self.rule_id, "kind": self.kind.value, "anchor": self.anchor, "min_len": self.min_len}
        if self.anchor_close is not None:
            obj["anchor_close"] = self.anchor_close
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ExtractionRule":
        try:
            return cls(
                rule_id=obj["rule_id"],
                kind=RuleKind(obj["kind"].lower()),
                anchor=obj["anchor"],
                anchor_close=obj.get("anchor_close"),
                min_len=int(obj.get("min_len", 1)),
            )
        except (KeyError, AttributeError, ValueError) as exc:
            raise CorpusError(f"bad rule record {obj!r}: {exc}") from exc


def _check_unique(rules: list[ExtractionRule]) -> None:
    seen = set()
    for r in rules:
        if r.rule_id in seen:
            raise CorpusError(f"duplicate rule_id {r.rule_id!r}")
        seen.add(r.rule_id)


def default_rules() -> list[ExtractionRule]:
    """Keyword families seen in IoT malware strings.

    Order matters: the first matching rule tags the command.
    """
    rules = [
        ExtractionRule("if-fi", RuleKind.DELIMITED, "if ", "fi", min_len=5),
        ExtractionRule("cd", RuleKind.PREFIX, "cd ", min_len=5),
    ]
    for verb in ("GET", "POST", "HEAD", "PUT"):
        rules.append(ExtractionRule(f"http-{verb.lower()}", RuleKind.PREFIX, verb + " ", min_len=5))
    for kw in (
        "wget", "tftp", "curl", "chmod", "busybox", "rm", "kill", "killall", "pkill", "wait",
        "disown", "suspend", "fc", "history", "break", "nohup", "echo", "cat", "sh", "bash",
        "iptables", "crontab", "ulimit", "mkdir", "cp", "mv", "ps", "nc", "telnetd", "reboot",
    ):
        rules.append(ExtractionRule(f"kw-{kw}", RuleKind.KEYWORD, kw, min_len=DEFAULT_MIN_RUN))
    _check_unique(rules)
    return rules


def load_rules(stream: Iterable[str]) -> list[ExtractionRule]:
    """Parse a JSON-lines rules file."""
    rules = []
    for lineno, line in enumerate(stream, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"rules line {lineno}: {exc}") from exc
        rules.append(ExtractionRule.from_json(obj))
    _check_unique(rules)
    return rules


def _read_all(binary: bytes | BinaryIO, source_id: str) -> bytes:
    if isinstance(binary, (bytes, bytearray, memoryview)):
        return bytes(binary)
    try:
        return binary.read()
    except OSError as exc:
        raise OSError(f"{source_id}: {exc}") from exc


def scan_strings(binary: bytes | BinaryIO, min_len: int = DEFAULT_MIN_RUN, source_id: str = "<bytes>") -> list[StringRun]:
    if min_len < 1:
        raise ValueError("min_len must be >= 1")
    data = _read_all(binary, source_id)
    pat = _RUN_CACHE.get(min_len)
    if pat is None:
        pat = _RUN_CACHE[min_len] = re.compile(rb"[\x20-\x7e\t]{%d,}" % min_len)
    return [StringRun(m.group(0), m.start()) for m in pat.finditer(data)]


def match_commands(
    runs: Iterable[StringRun],
    rules: list[ExtractionRule],
    label: Label | str = Label.MALICIOUS,
    source_id: str = "<bytes>",
) -> list[Command]:
    if not rules:
        raise ValueError("at least one extraction rule is required")
    label = Label.parse(label)
    out = []
    for run in runs:
        for rule in rules:
            text = rule.extract(run.bytes)
            if text:
                out.append(Command(text, label, source_id, SourceKind.BINARY_STRINGS, rule.rule_id))
                break
    return out


def extract_binary_commands(source, rules=None, label=Label.MALICIOUS, min_len=DEFAULT_MIN_RUN, source_id=None):
    """scan_strings + match_commands for one file path or byte buffer."""
    if isinstance(source, (str, os.PathLike)):
        source_id = source_id or str(source)
        with open(source, "rb") as fh:
            runs = scan_strings(fh, min_len, source_id)
    else:
        source_id = source_id or "<bytes>"
        runs = scan_strings(source, min_len, source_id)
    return match_commands(runs, rules or default_rules(), label, source_id)


# ---- pcap --------------------------------------------------------------------

LINKTYPE_ETHERNET = 1
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_VLAN = 0x8100
IPPROTO_TCP = 6


@dataclass
class PcapStats:
    records: int = 0
    skipped_linktype: int = 0
    non_tcp: int = 0
    empty_payload: int = 0
    filtered: int = 0
    truncated: int = 0
    warnings: int = 0


def is_plaintext(payload: bytes, threshold: float = PRINTABLE_FRACTION) -> bool:
    if payload.startswith(HTTP_PREFIXES):
        return True
    printable = sum(b in _PRINTABLE or b in (0x0A, 0x0D) for b in payload)
    return printable >= threshold * len(payload)


def _tcp_payload(frame: bytes) -> bytes | None:
    """TCP payload of an Ethernet/IPv4 frame, or None when not TCP/IPv4."""
    if len(frame) < 14:
        return None
    (ethertype,) = struct.unpack_from("!H", frame, 12)
    off = 14
    if ethertype == ETHERTYPE_VLAN and len(frame) >= 18:
        (ethertype,) = struct.unpack_from("!H", frame, 16)
        off = 18
    if ethertype != ETHERTYPE_IPV4 or len(frame) < off + 20:
        return None
    vihl = frame[off]
    if vihl >> 4 != 4:
        return None
    ihl = (vihl & 0x0F) * 4
    (total_len,) = struct.unpack_from("!H", frame, off + 2)
    (frag,) = struct.unpack_from("!H", frame, off + 6)
    proto = frame[off + 9]
    if proto != IPPROTO_TCP or ihl < 20 or (frag & 0x1FFF):
        return None
    ip_end = min(len(frame), off + total_len) if total_len else len(frame)
    tcp = off + ihl
    if ip_end < tcp + 20:
        return None
    data_off = (frame[tcp + 12] >> 4) * 4
    if data_off < 20:
        return None
    return frame[tcp + data_off:ip_end]


def iter_pcap_frames(data: bytes, stats: PcapStats) -> Iterator[tuple[int, bytes]]:
    """Yield (record index, frame bytes) for each Ethernet record."""
    if len(data) < 24:
        raise CorpusError("pcap: truncated global header")
    magic = data[:4]
    if magic == b"\xd4\xc3\xb2\xa1":
        endian = "<"
    elif magic == b"\xa1\xb2\xc3\xd4":
        endian = ">"
    else:
        raise CorpusError(f"pcap: bad magic {magic.hex()}")
    (linktype,) = struct.unpack_from(endian + "I", data, 20)
    pos = 24
    idx = 0
    while pos < len(data):
        if pos + 16 > len(data):
            stats.truncated += 1
            stats.warnings += 1
            log.warning("pcap: truncated record header at byte %d", pos)
            return
        _sec, _usec, incl_len, _orig = struct.unpack_from(endian + "IIII", data, pos)
        pos += 16
        if pos + incl_len > len(data):
            stats.truncated += 1
            stats.warnings += 1
            log.warning("pcap: truncated record body at byte %d", pos)
            return
        frame = data[pos:pos + incl_len]
        pos += incl_len
        stats.records += 1
        if linktype != LINKTYPE_ETHERNET:
            stats.skipped_linktype += 1
            continue
        yield idx, frame
        idx += 1


def extract_pcap_payloads(
    capture: bytes | BinaryIO,
    label: Label | str = Label.BENIGN,
    source_id: str = "<pcap>",
    stats: PcapStats | None = None,
) -> list[Command]:
    label = Label.parse(label)
    stats = stats if stats is not None else PcapStats()
    data = _read_all(capture, source_id)
    out = []
    for _idx, frame in iter_pcap_frames(data, stats):
        payload = _tcp_payload(frame)
        if payload is None:
            stats.non_tcp += 1
        elif not payload:
            stats.empty_payload += 1
        elif not is_plaintext(payload):
            stats.filtered += 1
        else:
            out.append(Command(payload, label, source_id, SourceKind.PCAP_PAYLOAD))
    return out


# ---- text lists --------------------------------------------------------------

@dataclass
class TextStats:
    lines: int = 0
    warnings: int = 0


def load_text_commands(
    lines: bytes | BinaryIO | Iterable[bytes | str],
    label: Label | str,
    source_id: str = "<text>",
    stats: TextStats | None = None,
) -> list[Command]:
    """One command per non-blank line. Invalid UTF-8 is replaced, not fatal."""
    label = Label.parse(label)
    stats = stats if stats is not None else TextStats()
    if isinstance(lines, (bytes, bytearray)):
        lines = io.BytesIO(lines)
    out = []
    for raw in lines:
        stats.lines += 1
        if isinstance(raw, str):
            text = raw
        else:
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError:
                stats.warnings += 1
                text = raw.decode("utf-8", errors="replace")
        text = text.strip()
        if text:
            out.append(Command(text.encode("utf-8"), label, source_id, SourceKind.TEXT_LIST))
    return out


# ---- redaction -----------------------------------------------------------------

_IPV4 = re.compile(rb"(?<![0-9.])(?:[0-9]{1,3}\.){3}[0-9]{1,3}(?![0-9])")
_USER_FLAG = re.compile(rb"(?<!\S)(-u|--user)(\s+|=)(\S+)")
# the user name segment, whether or not a deeper path follows
_HOME = re.compile(rb"/home/[^/\s;|&'\"]+(?=/|[\s;|&'\"]|$)")


def redact(command: Command) -> Command:
    """Mask IPv4 literals, -u/--user values and /home/<name>/ segments."""
    text = _IPV4.sub(b"0.0.0.0", command.text)
    text = _USER_FLAG.sub(rb"\1\2USER", text)
    text = _HOME.sub(b"/home/USER", text)
    if text == command.text:
        return command
    return Command(text, command.label, command.source_id, command.source_kind, command.rule_id)


# ---- JSONL ---------------------------------------------------------------------

def write_jsonl(commands: Iterable[Command], stream) -> int:
    n = 0
    for c in commands:
        stream.write(json.dumps(c.to_json(), ensure_ascii=False) + "\n")
        n += 1
    return n


def read_jsonl(stream) -> list[Command]:
    out = []
    for lineno, line in enumerate(stream, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"corpus line {lineno}: {exc}") from exc
        out.append(Command.from_json(obj))
    return out
