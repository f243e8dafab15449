from datetime import datetime, timezone

import numpy as np
import pytest

from ais_outliers.ingest import AisRecord, VesselTrack


def utc(y, mo, d, h=0, mi=0, s=0):
    return datetime(y, mo, d, h, mi, s, tzinfo=timezone.utc)


def make_record(mmsi="367000001", ts=None, lat=30.0, lon=-80.0, sog=10.0,
                cog=90.0, length=100.0):
    return AisRecord(mmsi=mmsi, timestamp=ts or utc(2019, 3, 6), lat=lat,
                     lon=lon, sog=sog, cog=cog, length=length)


def make_track(mmsi, records):
    return VesselTrack(mmsi=mmsi, records=tuple(records))


@pytest.fixture
def rng():
    return np.random.default_rng(20190306)
