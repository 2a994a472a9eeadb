import json
import logging
import math
import sqlite3
import typing

import sqlalchemy
import sqlalchemy.orm
from sqlalchemy import event
from sqlalchemy.engine import Engine

import velander.model as model
import velander.select
from velander import profiles
from velander.evd import Formulation

log = logging.getLogger(__name__)


# enforce foreign key constrains in SQLite
@event.listens_for(Engine, "connect")
def _set_sqlite_pragma(dbapi_connection, connection_record):
    if not isinstance(dbapi_connection, sqlite3.Connection):
        return
    cursor = dbapi_connection.cursor()
    cursor.execute("PRAGMA foreign_keys=ON")
    cursor.close()


class Connection:
    """
    Create a new database connection.
    If the database is empty :class:`Connection` will create
    any missing schema.

    Currently sqlite and postgresql are supported as backend databases,
    postgresql needs the ``postgres`` extra (psycopg2).

    In addition to the open/close syntax, Connection
    supports the context manager syntax where the context
    is treated as a transaction.
    Any changes will be automatically rolled back
    in the event of an exception::

        with Connection("sqlite:///velander.db") as conn:
            dataset = velander.DatasetHandle.create(conn, 'households', 2022)

    :param url: dialect[+driver]://user:password@host/dbname[?key=value..]
    :type url: str
    """

    def __init__(self, url, **kwargs):
        self.url = url
        self.engine = sqlalchemy.create_engine(self.url, **kwargs)
        self.make_session = sqlalchemy.orm.sessionmaker(bind=self.engine)

    def open(self):
        """ Open the database connection
        and create any absent tables and indices
        """
        model.Base.metadata.create_all(self.engine)
        self.connection = self.engine.connect()

    def close(self):
        """ Close the database connection
        and free any connections in the connection pool
        """

        self.connection.close()
        self.engine.dispose()

    def __enter__(self):
        self.open()
        self.session = self.make_session()
        return self

    def __exit__(self, exc_type, exc_val, traceback):
        if exc_type is not None:
            # rollback the session and raise the received exception
            self.session.rollback()
            self.session.close()
            self.close()
            return False
        # otherwise end the transaction and close the connection
        self.session.commit()
        self.session.close()
        self.close()


class InvalidRecordError(Exception):

    def __init__(self, message: str):
        """This exception will be raised if invalid records are found to be
        inserted into the database

        :param message: Description of the failed criteria
        :type message: str
        """
        super().__init__(message)


class DatasetHandle:
    """

    Create a handle to an existing dataset with id *dataset_id*
    accessed via *connection*.

    :param connection: database connection
    :type connection: Connection
    :param dataset_id: unique id for an existing dataset
    :type dataset_id: int
    """

    def __init__(self, connection: Connection, dataset_id: int):
        self._dataset_id = dataset_id
        self.conn = connection
        self._check_exists()

    def __len__(self):
        """Return the number of customer records in the dataset

        :return: record count
        :rtype: int
        """
        return self.conn.session.query(model.Customer).filter(
            model.Customer.dataset_id == self._dataset_id
        ).count()

    def __repr__(self):
        return '<DatasetHandle(dataset_id={})>'.format(self._dataset_id)

    def __eq__(self, other):
        return self.dataset_id == other.dataset_id

    @property
    def dataset_id(self):
        """Get the unique id for this dataset

        Dataset ids are automatically assigned at creation time.
        """
        return self._dataset_id

    @property
    def segment(self) -> typing.Optional[str]:
        return self._row().segment

    @property
    def year(self) -> typing.Optional[int]:
        return self._row().year

    @classmethod
    def create(cls, connection: Connection, segment: str = None,
               year: int = None, meta: dict = None):
        """Create a new empty dataset via *connection* and return a
        DatasetHandle to it

        :param connection: database connection
        :type connection: Connection
        :param segment: customer segment, e.g. an industry code
        :type segment: str
        :param year: year of the load profiles
        :type year: int
        :param meta: JSON serialisable metadata
        :type meta: dict
        :return: DatasetHandle to a new dataset
        :rtype: DatasetHandle
        """

        query = connection.session.query(
            sqlalchemy.func.max(model.Dataset.dataset_id)
        ).first()
        dataset_id = query[0]

        if dataset_id is None:
            dataset_id = 0
        else:
            dataset_id += 1
        connection.session.add(model.Dataset(
            dataset_id=dataset_id, segment=segment, year=year,
            meta=json.dumps(meta) if meta is not None else None
        ))
        connection.session.commit()
        log.debug('created dataset %d', dataset_id)
        return DatasetHandle(connection, dataset_id)

    @classmethod
    def read(cls, connection: Connection, dataset_id: int):
        """Create a new DatasetHandle to an existing dataset
        with unique identifier `dataset_id`

        :raises ValueError: Raised if the dataset does not exist
        :rtype: DatasetHandle
        """

        return DatasetHandle(connection, dataset_id)

    def delete(self):
        """Delete this dataset together with its records and fits"""

        self._check_exists()
        session = self.conn.session
        session.query(model.Fit).filter(
            model.Fit.dataset_id == self._dataset_id).delete()
        session.query(model.Customer).filter(
            model.Customer.dataset_id == self._dataset_id).delete()
        session.query(model.Dataset).filter(
            model.Dataset.dataset_id == self._dataset_id).delete()
        session.commit()

    def _row(self) -> model.Dataset:
        return self.conn.session.query(model.Dataset).filter(
            model.Dataset.dataset_id == self._dataset_id).one()

    def _check_exists(self):

        exists = self.conn.session.query(sqlalchemy.exists().where(
            model.Dataset.dataset_id == self._dataset_id
        )).scalar()
        if not exists:
            raise ValueError(
                'cannot read dataset with dataset id: {}'.format(
                    self._dataset_id)
            )

    def add_records(self, records):
        """Append customer records to the dataset

        Records keep their insertion order when read back.

        :param records: Records or a sequence of CustomerRecord
        :raises InvalidRecordError: Raised for negative or non-finite
            energy or peak and for customer ids already present
        """

        records = profiles.as_records(records)
        existing = {
            row[0] for row in velander.select.customer_ids(
                self._dataset_id).with_session(self.conn.session).all()
        }
        position = len(self)
        customers = (
            model.Customer(
                dataset_id=self._dataset_id,
                customer_id=record.customer_id,
                position=position + i,
                energy=record.energy,
                peak=record.peak
            )
            for i, record in enumerate(records)
        )
        customers = list(self._check_records(customers, existing))
        self.conn.session.add_all(customers)
        self.conn.session.commit()
        log.info('stored %d records in dataset %d', len(customers),
                 self._dataset_id)

    @staticmethod
    def _check_records(customers, existing: set) -> typing.Generator:
        """Guard against invalid records by raising an InvalidRecordError

        :param customers: An iterable of Customers
        :type customers: typing.Iterable[model.Customer]
        :param existing: customer ids already stored
        :type existing: set
        :raises InvalidRecordError: Raised when energy or peak is negative
            or not finite
        :raises InvalidRecordError: Raised when a customer id is repeated
        :return: Yield each customer if there are no uncaught exceptions
        :rtype: typing.Generator[model.Customer, None, None]
        """

        seen = set(existing)
        for customer in customers:
            for name in ('energy', 'peak'):
                value = getattr(customer, name)
                if not math.isfinite(value) or value < 0:
                    raise InvalidRecordError(
                        '{}, {} must be finite and non-negative'.format(
                            customer, name)
                    )
            if customer.customer_id in seen:
                raise InvalidRecordError(
                    '{}, duplicate customer id'.format(customer))
            seen.add(customer.customer_id)
            yield customer

    def records(self, min_energy: float = None,
                max_energy: float = None) -> profiles.Records:
        """Read the records of this dataset

        :param min_energy: smallest energy to include
        :param max_energy: largest energy to include
        :rtype: profiles.Records
        """

        rows = velander.select.records(
            self._dataset_id, min_energy, max_energy
        ).with_session(self.conn.session).all()
        return profiles.Records([tuple(row) for row in rows])

    def add_fit(self, fit) -> int:
        """Store a fitted model

        :param fit: an MqrFit or MleFit
        :return: the new fit id
        :rtype: int
        """

        objective = fit.train_apl if fit.method == 'MQR' else fit.train_anll
        row = model.Fit(
            dataset_id=self._dataset_id,
            method=fit.method,
            formulation=fit.formulation.label,
            objective=float(objective),
            payload=json.dumps(fit.to_dict())
        )
        self.conn.session.add(row)
        self.conn.session.commit()
        return row.fit_id

    def fits(self, method: str = None,
             formulation: str = None) -> typing.List[dict]:
        """Stored fits, optionally filtered by method and formulation

        :return: one dict per fit, the stored payload plus ``fit_id``
        :rtype: typing.List[dict]
        """

        if method is not None:
            method = method.upper()
        if formulation is not None:
            formulation = Formulation.parse(formulation).label
        rows = velander.select.fits(
            self._dataset_id, method, formulation
        ).with_session(self.conn.session).all()
        return [
            dict(json.loads(row.payload), fit_id=row.fit_id) for row in rows
        ]

