"""Interval load profiles and their reduction to (energy, peak) records.

A load profile is one customer's sequence of interval readings in kW.
Every fit in velander consumes the reduced form: the peak load (the
maximum reading) and the energy consumption (the sum of the readings,
with the interval length normalised to one).
"""
import io
import json
import logging
import typing
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

#: number of readings in the first week of a 15 minute profile
LEADING_WINDOW = 672

PROFILE_COLUMNS = ['customer_id', 'interval_minutes']
RECORD_COLUMNS = ['customer_id', 'energy', 'peak']

INCOMPLETE = 'incomplete'
NEGATIVE = 'negative'
LEADING_ZERO = 'leading_zero'


class ProfileSchemaError(Exception):

    def __init__(self, line: int, column: str, message: str):
        """This exception will be raised if a CSV file does not match
        the documented profile or record schema

        :param line: 1-based line number in the file (the header is line 1)
        :type line: int
        :param column: name of the offending column
        :type column: str
        :param message: Description of the failed criteria
        :type message: str
        """
        self.line = line
        self.column = column
        super().__init__(
            'line {}, column {}: {}'.format(line, column, message))


@dataclass(frozen=True, eq=False)
class LoadProfile:
    """One customer's interval meter readings

    :param customer_id: unique customer identifier
    :type customer_id: str
    :param interval_minutes: length of one reading interval in minutes
    :type interval_minutes: int
    :param readings: load values in kW in timestamp order,
        NaN marks a missing reading
    :type readings: np.ndarray
    """

    customer_id: str
    interval_minutes: int
    readings: np.ndarray = field(repr=False)

    def __post_init__(self):
        if int(self.interval_minutes) <= 0:
            raise ValueError('interval_minutes must be positive')
        readings = np.array(self.readings, dtype=float)
        readings.setflags(write=False)
        object.__setattr__(self, 'readings', readings)
        object.__setattr__(self, 'customer_id', str(self.customer_id))
        object.__setattr__(
            self, 'interval_minutes', int(self.interval_minutes))

    def __len__(self):
        return len(self.readings)

    def __eq__(self, other):
        return (
            self.customer_id == other.customer_id and
            self.interval_minutes == other.interval_minutes and
            np.array_equal(self.readings, other.readings, equal_nan=True)
        )


class CustomerRecord(typing.NamedTuple):
    """The reduced observation of one customer

    energy is in kW·interval, peak in kW
    """

    customer_id: str
    energy: float
    peak: float


class Base(np.recarray):

    """A Base class for subclassing numpy record arrays

    Returns:
        np.recarray -- A subclass of np.recarray
    """

    columns = []
    types = []

    def __new__(cls, *args, **kwargs):
        dtype = list(zip(cls.columns, cls.types))
        a = np.array([tuple(row) for row in args[0]], dtype=dtype)
        return a.view(cls)


class Records(Base):

    """A table of customer records, one row per customer"""

    columns = RECORD_COLUMNS
    types = [object, np.float64, np.float64]

    @classmethod
    def from_arrays(cls, customer_ids, energy, peak) -> 'Records':
        """Build a table from three equal length columns

        Arguments:
            customer_ids {Iterable[str]} -- customer identifiers
            energy {np.ndarray} -- energy consumption per customer
            peak {np.ndarray} -- peak load per customer

        Returns:
            Records
        """

        energy = np.asarray(energy, dtype=float)
        peak = np.asarray(peak, dtype=float)
        customer_ids = [str(item) for item in customer_ids]
        if not len(customer_ids) == len(energy) == len(peak):
            raise ValueError('record columns must have equal length')
        return cls(zip(customer_ids, energy, peak))

    @property
    def energy(self):
        """Energy consumption E per customer

        Returns:
            np.ndarray -- array of floats
        """

        return np.asarray(self['energy'])

    @property
    def peak(self):
        """Peak load P_max per customer

        Returns:
            np.ndarray -- array of floats
        """

        return np.asarray(self['peak'])

    def __iter__(self):
        for row in super().__iter__():
            yield CustomerRecord(str(row[0]), float(row[1]), float(row[2]))

    def __repr__(self):
        return 'Records(n={})'.format(len(self))


def as_records(records) -> Records:
    """Coerce a sequence of CustomerRecord (or a Records table) to Records"""

    if isinstance(records, Records):
        return records
    return Records([tuple(record) for record in records])


def check_fit_records(records: Records, min_count: int) -> Records:
    """Guard shared by every fit: enough records and strictly positive
    energy, since sqrt(E) appears in denominators

    :raises ValueError: too few records, non-positive energy
        or non-finite values
    """

    records = as_records(records)
    if len(records) < min_count:
        raise ValueError(
            'at least {} records are required, got {}'.format(
                min_count, len(records)))
    if not np.all(np.isfinite(records.energy)) or \
            not np.all(np.isfinite(records.peak)):
        raise ValueError('energy and peak must be finite')
    bad = np.flatnonzero(records.energy <= 0)
    if len(bad):
        raise ValueError(
            'customer {} has non-positive energy {}'.format(
                records.customer_id[bad[0]], records.energy[bad[0]]))
    return records


@dataclass
class FilterReport:
    """Accounts for every profile passed to :func:`filter_profiles`"""

    kept: int = 0
    dropped_incomplete: int = 0
    dropped_negative: int = 0
    dropped_leading_zero: int = 0
    dropped_ids: typing.List[typing.Tuple[str, str]] = field(
        default_factory=list)

    @property
    def total(self) -> int:
        return (
            self.kept + self.dropped_incomplete +
            self.dropped_negative + self.dropped_leading_zero
        )

    def to_dict(self) -> dict:
        return {
            'kept': self.kept,
            'dropped_incomplete': self.dropped_incomplete,
            'dropped_negative': self.dropped_negative,
            'dropped_leading_zero': self.dropped_leading_zero,
            'dropped_ids': [list(item) for item in self.dropped_ids],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def reduce_profile(profile: LoadProfile) -> CustomerRecord:
    """Reduce a profile to its peak load and energy consumption

    The interval length is normalised to one so energy is
    in kW·interval.

    :param profile: load profile with at least one reading
    :type profile: LoadProfile
    :raises ValueError: Raised if the profile has no readings
    :return: the reduced record
    :rtype: CustomerRecord
    """

    if not len(profile.readings):
        raise ValueError(
            'cannot reduce profile {} with no readings'.format(
                profile.customer_id))
    return CustomerRecord(
        profile.customer_id,
        float(np.sum(profile.readings)),
        float(np.max(profile.readings))
    )


def reduce_profiles(profiles: typing.Iterable[LoadProfile]) -> Records:
    """Reduce every profile, preserving order"""

    return Records([tuple(reduce_profile(p)) for p in profiles])


def _drop_reason(profile, expected_T, leading_window):
    # precedence: incomplete > negative > leading zero
    readings = profile.readings
    if len(readings) != expected_T or np.any(np.isnan(readings)):
        return INCOMPLETE
    if np.any(readings < 0):
        return NEGATIVE
    if np.all(readings[:leading_window] == 0):
        return LEADING_ZERO
    return None


def filter_profiles(
    profiles: typing.Sequence[LoadProfile],
    expected_T: int,
    leading_window: int = LEADING_WINDOW
) -> typing.Tuple[typing.List[LoadProfile], FilterReport]:
    """Remove profiles that are incomplete, contain negative readings
    or are all zero over the first *leading_window* readings

    Each dropped profile is recorded with exactly one reason.

    :param profiles: profiles to filter
    :type profiles: typing.Sequence[LoadProfile]
    :param expected_T: required number of readings
    :type expected_T: int
    :param leading_window: length of the leading all-zero check
    :type leading_window: int
    :raises ValueError: Raised if leading_window is not in [1, expected_T]
    :return: surviving profiles in input order and the filter report
    :rtype: typing.Tuple[typing.List[LoadProfile], FilterReport]
    """

    if expected_T <= 0:
        raise ValueError('expected_T must be positive')
    if not 0 < leading_window <= expected_T:
        raise ValueError(
            'leading_window must be between 1 and expected_T={}'.format(
                expected_T))

    kept, report = [], FilterReport()
    for profile in profiles:
        reason = _drop_reason(profile, expected_T, leading_window)
        if reason is None:
            kept.append(profile)
            report.kept += 1
            continue
        attr = 'dropped_' + reason
        setattr(report, attr, getattr(report, attr) + 1)
        report.dropped_ids.append((profile.customer_id, reason))

    log.info(
        'kept %d of %d profiles (incomplete=%d, negative=%d, '
        'leading_zero=%d)', report.kept, report.total,
        report.dropped_incomplete, report.dropped_negative,
        report.dropped_leading_zero
    )
    return kept, report


def _read_frame(source) -> pd.DataFrame:
    try:
        frame = pd.read_csv(
            source, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        return pd.DataFrame()
    # short rows are padded with NaN even without default NA parsing
    return frame.fillna('')


def _parse_numeric(frame, column, allow_empty):
    raw = frame[column].str.strip()
    values = pd.to_numeric(raw.where(raw != ''), errors='coerce')
    missing = (raw == '') | (raw.str.lower() == 'nan')
    bad = values.isna() & (~missing if allow_empty else True)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise ProfileSchemaError(
            row + 2, column,
            'cannot parse {!r} as a number'.format(raw.iloc[row]))
    return values.to_numpy(dtype=float)


def ingest_csv(source) -> typing.List[LoadProfile]:
    """Read load profiles from the profile CSV schema

    The header is ``customer_id,interval_minutes,r_0,r_1,...,r_{T-1}``
    with one row per customer. Empty cells are missing readings;
    trailing empty cells shorten the profile.

    :param source: path or text stream
    :raises ProfileSchemaError: Raised if the header does not match the
        schema or a cell cannot be parsed
    :return: one profile per row, in file order
    :rtype: typing.List[LoadProfile]
    """

    frame = _read_frame(source)
    if not len(frame.columns):
        return []
    columns = list(frame.columns)
    for position, expected in enumerate(PROFILE_COLUMNS):
        if position >= len(columns) or columns[position] != expected:
            found = columns[position] if position < len(columns) else ''
            raise ProfileSchemaError(
                1, found, 'expected column {!r}'.format(expected))
    reading_columns = columns[len(PROFILE_COLUMNS):]
    for j, name in enumerate(reading_columns):
        if name != 'r_{}'.format(j):
            raise ProfileSchemaError(
                1, name, 'expected column {!r}'.format('r_{}'.format(j)))

    ids = frame['customer_id'].str.strip()
    empty_ids = np.flatnonzero((ids == '').to_numpy())
    if len(empty_ids):
        raise ProfileSchemaError(
            int(empty_ids[0]) + 2, 'customer_id', 'missing customer id')
    intervals = _parse_numeric(frame, 'interval_minutes', allow_empty=False)
    readings = np.column_stack([
        _parse_numeric(frame, name, allow_empty=True)
        for name in reading_columns
    ]) if reading_columns else np.zeros((len(frame), 0))

    profiles = []
    for row, (customer_id, interval) in enumerate(zip(ids, intervals)):
        if interval <= 0 or interval != int(interval):
            raise ProfileSchemaError(
                row + 2, 'interval_minutes',
                'interval_minutes must be a positive integer')
        values = readings[row]
        present = np.flatnonzero(~np.isnan(values))
        length = present[-1] + 1 if len(present) else 0
        profiles.append(LoadProfile(customer_id, int(interval), values[:length]))
    log.debug('read %d profiles', len(profiles))
    return profiles


def write_profiles_csv(profiles: typing.Sequence[LoadProfile], target):
    """Write profiles in the profile CSV schema; shorter profiles are
    padded with empty cells"""

    width = max((len(p) for p in profiles), default=0)
    rows = []
    for profile in profiles:
        padded = np.full(width, np.nan)
        padded[:len(profile)] = profile.readings
        rows.append([profile.customer_id, profile.interval_minutes] +
                    padded.tolist())
    frame = pd.DataFrame(
        rows, columns=PROFILE_COLUMNS + ['r_{}'.format(j)
                                         for j in range(width)])
    frame.to_csv(target, index=False, float_format='%.17g')


def read_records_csv(source) -> Records:
    """Read records from the ``customer_id,energy,peak`` schema

    :raises ProfileSchemaError: Raised on a header mismatch or an
        unparseable cell
    """

    frame = _read_frame(source)
    if not len(frame.columns):
        return Records([])
    if list(frame.columns) != RECORD_COLUMNS:
        raise ProfileSchemaError(
            1, ','.join(frame.columns),
            'expected header {!r}'.format(','.join(RECORD_COLUMNS)))
    energy = _parse_numeric(frame, 'energy', allow_empty=False)
    peak = _parse_numeric(frame, 'peak', allow_empty=False)
    return Records.from_arrays(frame['customer_id'].str.strip(), energy, peak)


def write_records_csv(records, target):
    """Write records in the ``customer_id,energy,peak`` schema with
    17 significant digits"""

    records = as_records(records)
    frame = pd.DataFrame({
        'customer_id': [str(item) for item in records.customer_id],
        'energy': records.energy,
        'peak': records.peak,
    }, columns=RECORD_COLUMNS)
    frame.to_csv(target, index=False, float_format='%.17g')


def read_text(text: str) -> typing.List[LoadProfile]:
    """Convenience wrapper reading profiles from a CSV string"""

    return ingest_csv(io.StringIO(text))
