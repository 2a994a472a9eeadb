import os
import tempfile
import unittest

import velander
import velander.api
import velander.model
from velander import mqr, opt, profiles
from velander.profiles import CustomerRecord
from test_base import TestCaseDB, make_records
from sqlalchemy.orm.session import Session


class DummyException(Exception):
    pass


class TestConnection(unittest.TestCase):

    def test_rollback(self):
        """ uncommitted changes are rolled back
        if there is an exception inside the context
        """
        with tempfile.TemporaryDirectory() as tmp:
            dburl = 'sqlite:///' + os.path.join(tmp, 'velander.db')
            try:
                with velander.Connection(dburl) as conn:
                    conn.session.add(velander.model.Dataset(dataset_id=0))
                    raise DummyException
            except DummyException:
                pass
            with velander.Connection(dburl) as conn:
                n_datasets = conn.session.query(
                    velander.model.Dataset).count()
            self.assertEqual(n_datasets, 0)

    def test_commit(self):
        with tempfile.TemporaryDirectory() as tmp:
            dburl = 'sqlite:///' + os.path.join(tmp, 'velander.db')
            with velander.Connection(dburl) as conn:
                dataset = velander.DatasetHandle.create(conn, 'retail', 2019)
                dataset.add_records([CustomerRecord('a', 10.0, 2.0)])
            with velander.Connection(dburl) as conn:
                dataset = velander.DatasetHandle.read(conn, 0)
                self.assertEqual(len(dataset), 1)
                self.assertEqual(dataset.segment, 'retail')


class TestDataset(TestCaseDB):

    def run(self, result=None):
        with velander.Connection('sqlite://') as conn:
            self.conn = conn
            self.conn.make_session = lambda: Session(self._connection)
            super().run(result)

    def test_init_raises(self):
        """ raise a ValueError if a handle to a dataset
        is constructed that does not exist
        """
        self.assertRaises(ValueError, velander.DatasetHandle, self.conn, 0)
        self.assertRaises(
            ValueError, velander.DatasetHandle.read, self.conn, 0)

    def test_create(self):
        """first dataset has id zero
        """
        dataset = velander.DatasetHandle.create(self.conn)
        self.assertEqual(dataset.dataset_id, 0)

    def test_create_two(self):
        velander.DatasetHandle.create(self.conn)
        dataset = velander.DatasetHandle.create(self.conn)
        self.assertEqual(dataset.dataset_id, 1)

    def test_segment_year(self):
        dataset = velander.DatasetHandle.create(
            self.conn, segment='households', year=2022)
        self.assertEqual(dataset.segment, 'households')
        self.assertEqual(dataset.year, 2022)

    def test_read(self):
        dataset = velander.DatasetHandle.create(self.conn)
        same = velander.DatasetHandle.read(self.conn, dataset.dataset_id)
        self.assertEqual(dataset, same)

    def test_delete(self):
        dataset = velander.DatasetHandle.create(self.conn)
        dataset.add_records(make_records(5))
        dataset.add_fit(mqr.fit_c4(make_records(5)))
        dataset_id = dataset.dataset_id
        dataset.delete()
        self.assertRaises(
            ValueError, velander.DatasetHandle.read, self.conn, dataset_id)
        n_customers = self.conn.session.query(velander.model.Customer).count()
        n_fits = self.conn.session.query(velander.model.Fit).count()
        self.assertEqual(n_customers, 0)
        self.assertEqual(n_fits, 0)

    def test_add_records(self):
        dataset = velander.DatasetHandle.create(self.conn)
        records = make_records(20)
        dataset.add_records(records)
        self.assertEqual(len(dataset), 20)
        self.assertListEqual(list(dataset.records()), list(records))

    def test_add_records_appends(self):
        """records are read back in insertion order across calls
        """
        dataset = velander.DatasetHandle.create(self.conn)
        dataset.add_records([CustomerRecord('z', 1.0, 1.0)])
        dataset.add_records([CustomerRecord('a', 2.0, 1.0)])
        self.assertListEqual(
            [record.customer_id for record in dataset.records()],
            ['z', 'a']
        )

    def test_duplicate_customer(self):
        dataset = velander.DatasetHandle.create(self.conn)
        dataset.add_records([CustomerRecord('a', 1.0, 1.0)])
        self.assertRaises(
            velander.api.InvalidRecordError,
            dataset.add_records,
            [CustomerRecord('a', 2.0, 1.0)]
        )
        self.assertRaises(
            velander.api.InvalidRecordError,
            dataset.add_records,
            [CustomerRecord('b', 2.0, 1.0), CustomerRecord('b', 3.0, 1.0)]
        )
        self.assertEqual(len(dataset), 1)

    def test_negative_record(self):
        dataset = velander.DatasetHandle.create(self.conn)
        self.assertRaises(
            velander.api.InvalidRecordError,
            dataset.add_records,
            [CustomerRecord('a', -1.0, 1.0)]
        )
        self.assertRaises(
            velander.api.InvalidRecordError,
            dataset.add_records,
            [CustomerRecord('a', 1.0, float('nan'))]
        )

    def test_records_energy_range(self):
        dataset = velander.DatasetHandle.create(self.conn)
        dataset.add_records([
            CustomerRecord('a', 10.0, 1.0),
            CustomerRecord('b', 100.0, 5.0),
            CustomerRecord('c', 1000.0, 20.0),
        ])
        records = dataset.records(min_energy=50.0, max_energy=1000.0)
        self.assertIsInstance(records, profiles.Records)
        self.assertListEqual(
            [record.customer_id for record in records], ['b', 'c'])
        self.assertEqual(len(dataset.records(max_energy=5.0)), 0)

    def test_records_isolated(self):
        first = velander.DatasetHandle.create(self.conn)
        second = velander.DatasetHandle.create(self.conn)
        first.add_records([CustomerRecord('a', 10.0, 1.0)])
        second.add_records([CustomerRecord('a', 20.0, 2.0)])
        self.assertEqual(second.records()[0]['energy'], 20.0)

    def test_add_fit(self):
        dataset = velander.DatasetHandle.create(self.conn)
        records = make_records(30)
        fit = mqr.fit_c4(records)
        fit_id = dataset.add_fit(fit)
        stored = dataset.fits()
        self.assertEqual(len(stored), 1)
        self.assertEqual(stored[0]['fit_id'], fit_id)
        self.assertEqual(stored[0]['method'], 'MQR')
        self.assertEqual(stored[0]['formulation'], 'C4')
        self.assertAlmostEqual(stored[0]['train_apl'], fit.train_apl)

    def test_fits_filter(self):
        dataset = velander.DatasetHandle.create(self.conn)
        records = make_records(30)
        dataset.add_fit(mqr.fit_c4(records))
        dataset.add_fit(mqr.fit(
            'gumbel', records, config=opt.OptimConfig(n_starts=1)))
        self.assertEqual(len(dataset.fits()), 2)
        self.assertEqual(len(dataset.fits(method='mqr')), 2)
        self.assertEqual(len(dataset.fits(method='MLE')), 0)
        gumbel = dataset.fits(formulation='gumbel')
        self.assertEqual(len(gumbel), 1)
        self.assertEqual(gumbel[0]['formulation'], 'Gumbel')

    def test_fits_order(self):
        dataset = velander.DatasetHandle.create(self.conn)
        records = make_records(10)
        ids = [dataset.add_fit(mqr.fit_c4(records)) for _ in range(3)]
        self.assertListEqual(
            [fit['fit_id'] for fit in dataset.fits()], sorted(ids))


if __name__ == '__main__':
    unittest.main()
