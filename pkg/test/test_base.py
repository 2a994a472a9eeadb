import unittest

import numpy as np
from sqlalchemy import create_engine, event
from sqlalchemy.orm.session import Session

import velander.api  # noqa: F401, installs the sqlite foreign key pragma
import velander.model as model
from velander import profiles

Base = model.Base


class TestCaseDB(unittest.TestCase):
    """ A base test for setting up and tearing down the database """

    @classmethod
    def setUpClass(cls):
        """ Create the engine, create one connection
        and start a transaction """
        engine = create_engine(
            'sqlite://',
            echo=False
        )

        # let SQLAlchemy 2.0 drive BEGIN/SAVEPOINT itself, pysqlite's
        # implicit transaction handling otherwise drops the savepoints
        @event.listens_for(engine, "connect")
        def _no_implicit_begin(dbapi_connection, connection_record):
            dbapi_connection.isolation_level = None

        @event.listens_for(engine, "begin")
        def _emit_begin(conn):
            conn.exec_driver_sql("BEGIN")

        connection = engine.connect()
        cls._engine = engine
        cls._connection = connection
        cls.__transaction = connection.begin()
        Base.metadata.create_all(connection)

    @classmethod
    def tearDownClass(cls):
        """ tear down the top level transaction """
        cls.__transaction.rollback()
        cls._connection.close()
        cls._engine.dispose()

    def setUp(self):
        """ create a new session and a nested transaction """
        self._transaction = self._connection.begin_nested()
        self.session = Session(
            bind=self._connection, join_transaction_mode="create_savepoint")

    def tearDown(self):
        """ rollback the nested transaction """
        self.session.close()
        self._transaction.rollback()


def make_records(n, seed=0, theta0=0.05, scale=2.0, loc=5.0):
    """Gumbel distributed records, reproducible per seed"""
    rng = np.random.default_rng(seed)
    energy = np.exp(rng.uniform(np.log(1e2), np.log(1e6), n))
    peak = theta0 * energy + np.sqrt(energy) * (
        loc + scale * rng.gumbel(size=n))
    return profiles.Records.from_arrays(
        ['c{:05d}'.format(i) for i in range(n)], energy, peak)
