"""AIS CSV ingestion.

Parses MarineCadastre-style AIS exports into validated records, filters
vessels by length, and groups records into time-sorted per-vessel tracks.
Malformed rows are tallied per reason, never silently dropped.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable

from .errors import ConfigError, DataError

# Logical field -> column header as shipped by MarineCadastre.gov exports.
# Extra columns and arbitrary column order are tolerated.
DEFAULT_SCHEMA = {
    "mmsi": "MMSI",
    "timestamp": "BaseDateTime",
    "lat": "LAT",
    "lon": "LON",
    "sog": "SOG",
    "cog": "COG",
    "length": "Length",
}

# MarineCadastre uses the "T" separator; older exports use a space.
_TIMESTAMP_FORMATS = ("%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S")

DEFAULT_MIN_LENGTH_M = 20.0


@dataclass(frozen=True)
class AisRecord:
    """One validated AIS message row. `length` is None when not reported."""

    mmsi: str
    timestamp: datetime  # tz-aware UTC
    lat: float
    lon: float
    sog: float
    cog: float
    length: float | None

    def payload(self) -> tuple:
        """Value fields used for exact-duplicate comparison."""
        return (self.lat, self.lon, self.sog, self.cog, self.length)


@dataclass(frozen=True)
class VesselTrack:
    """All accepted records of one MMSI, ascending in time, deduplicated."""

    mmsi: str
    records: tuple[AisRecord, ...]

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class IngestReport:
    """Row-level accounting for one ingest pass.

    Invariant: rows_read == rows_accepted + rows_rejected, where rejected
    covers parse failures plus duplicate rows removed during grouping.
    """

    rows_read: int = 0
    rows_rejected: int = 0
    reject_reasons: dict[str, int] = field(default_factory=dict)
    vessels_kept: int = 0
    vessels_dropped_by_length: int = 0

    @property
    def rows_accepted(self) -> int:
        return self.rows_read - self.rows_rejected

    def reject(self, reason: str, n: int = 1) -> None:
        self.rows_rejected += n
        self.reject_reasons[reason] = self.reject_reasons.get(reason, 0) + n

    def merge(self, other: "IngestReport") -> None:
        self.rows_read += other.rows_read
        self.rows_rejected += other.rows_rejected
        for reason, n in other.reject_reasons.items():
            self.reject_reasons[reason] = self.reject_reasons.get(reason, 0) + n

    def to_text(self) -> str:
        lines = [
            f"rows_read={self.rows_read}",
            f"rows_accepted={self.rows_accepted}",
            f"rows_rejected={self.rows_rejected}",
        ]
        for reason in sorted(self.reject_reasons):
            lines.append(f"reject.{reason}={self.reject_reasons[reason]}")
        lines.append(f"vessels_kept={self.vessels_kept}")
        lines.append(f"vessels_dropped_by_length={self.vessels_dropped_by_length}")
        return "\n".join(lines) + "\n"

    def to_csv_text(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["key", "value"])
        for line in self.to_text().strip().split("\n"):
            key, value = line.split("=", 1)
            writer.writerow([key, value])
        return out.getvalue()


def _parse_timestamp(text: str) -> datetime | None:
    for fmt in _TIMESTAMP_FORMATS:
        try:
            return datetime.strptime(text, fmt).replace(tzinfo=timezone.utc)
        except ValueError:
            continue
    return None


def _parse_float(text: str) -> float | None:
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _open_text(source) -> tuple[IO[str], bool]:
    """Accept a path, text stream, or byte stream. Returns (stream, owned)."""
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    if hasattr(source, "read"):  # binary stream
        return io.TextIOWrapper(source, encoding="utf-8", newline=""), False
    raise ConfigError(f"unsupported AIS source: {type(source).__name__}")


def parse_ais_csv(
    source, schema: dict[str, str] | None = None
) -> tuple[list[AisRecord], IngestReport]:
    """Parse one AIS CSV into validated records plus a rejection report.

    `source` may be a path, an open text stream, or an open byte stream.
    `schema` maps logical fields (mmsi, timestamp, lat, lon, sog, cog,
    length) to column names; defaults match MarineCadastre headers.
    A missing required column raises ConfigError; an unreadable stream
    raises DataError. Bad rows never raise: they are tallied by reason.
    """
    columns = dict(DEFAULT_SCHEMA)
    if schema:
        unknown = set(schema) - set(DEFAULT_SCHEMA)
        if unknown:
            raise ConfigError(f"unknown schema fields: {sorted(unknown)}")
        columns.update(schema)

    stream, owned = _open_text(source)
    records: list[AisRecord] = []
    report = IngestReport()
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            return records, report

        index: dict[str, int] = {}
        for logical, column in columns.items():
            try:
                index[logical] = header.index(column)
            except ValueError:
                raise ConfigError(
                    f"missing required column '{column}' (field '{logical}')"
                ) from None
        max_index = max(index.values())

        for row in reader:
            if not row:
                continue
            report.rows_read += 1
            if len(row) <= max_index:
                report.reject("short_row")
                continue
            record, reason = _parse_row(row, index)
            if record is None:
                report.reject(reason)
            else:
                records.append(record)
    except (UnicodeDecodeError, csv.Error, OSError) as exc:
        raise DataError(f"unreadable AIS stream: {exc}") from exc
    finally:
        if owned:
            stream.close()
    return records, report


def _parse_row(row: list[str], index: dict[str, int]) -> tuple[AisRecord | None, str]:
    mmsi = row[index["mmsi"]].strip()
    if len(mmsi) != 9 or not mmsi.isdigit():
        return None, "bad_mmsi"

    timestamp = _parse_timestamp(row[index["timestamp"]].strip())
    if timestamp is None:
        return None, "bad_timestamp"

    lat = _parse_float(row[index["lat"]])
    if lat is None:
        return None, "bad_lat"
    if not -90.0 <= lat <= 90.0:
        return None, "lat_out_of_range"

    lon = _parse_float(row[index["lon"]])
    if lon is None:
        return None, "bad_lon"
    if not -180.0 <= lon <= 180.0:
        return None, "lon_out_of_range"

    sog = _parse_float(row[index["sog"]])
    if sog is None:
        return None, "bad_sog"
    if sog < 0.0:
        return None, "sog_out_of_range"

    cog = _parse_float(row[index["cog"]])
    if cog is None:
        return None, "bad_cog"
    if not 0.0 <= cog <= 360.0:
        return None, "cog_out_of_range"
    if cog == 360.0:  # alias of due north
        cog = 0.0

    # Length is optional in the data; unknown/unparsable/negative values are
    # recorded as None and removed later by the length filter.
    raw_length = row[index["length"]].strip()
    length = _parse_float(raw_length) if raw_length else None
    if length is not None and length < 0.0:
        length = None

    return AisRecord(mmsi, timestamp, lat, lon, sog, cog, length), ""


def filter_by_length(
    records: Iterable[AisRecord], min_length: float = DEFAULT_MIN_LENGTH_M
) -> list[AisRecord]:
    """Keep records of vessels strictly longer than `min_length` meters.

    Records with unknown length are dropped: the filter is defined on
    length and cannot be evaluated without it.
    """
    if min_length < 0:
        raise ConfigError("min_length must be >= 0")
    return [r for r in records if r.length is not None and r.length > min_length]


def group_and_sort(
    records: Iterable[AisRecord], report: IngestReport | None = None
) -> list[VesselTrack]:
    """Group records per MMSI and sort each track ascending in time.

    Rows sharing (MMSI, timestamp) are collapsed to the first one in input
    order: identical payloads tally as "duplicate_row", differing payloads
    as "duplicate_timestamp" when a report is supplied. Tracks are returned
    ordered by MMSI so output is stable across runs.
    """
    buckets: dict[str, list[AisRecord]] = {}
    for record in records:
        buckets.setdefault(record.mmsi, []).append(record)

    tracks = []
    for mmsi in sorted(buckets):
        # Stable sort keeps input order among equal timestamps (first wins).
        ordered = sorted(buckets[mmsi], key=lambda r: r.timestamp)
        kept: list[AisRecord] = []
        for record in ordered:
            if kept and kept[-1].timestamp == record.timestamp:
                if report is not None:
                    if record.payload() == kept[-1].payload():
                        report.reject("duplicate_row")
                    else:
                        report.reject("duplicate_timestamp")
                continue
            kept.append(record)
        tracks.append(VesselTrack(mmsi=mmsi, records=tuple(kept)))
    return tracks
