import unittest

import velander.model as model
import velander.select as select
from test_base import TestCaseDB


class TestSelect(TestCaseDB):
    """Two datasets, the first one stored out of id order"""

    def setUp(self):
        super().setUp()
        self.session.add_all([
            model.Dataset(dataset_id=0, segment='households'),
            model.Dataset(dataset_id=1, segment='offices'),
        ])
        self.session.commit()

        rows = [('d', 40.0, 2.0), ('a', 10.0, 1.0), ('c', 30.0, 4.0),
                ('b', 20.0, 3.0)]
        self.session.add_all([
            model.Customer(dataset_id=0, customer_id=customer_id,
                           position=position, energy=energy, peak=peak)
            for position, (customer_id, energy, peak) in enumerate(rows)
        ])
        self.session.add(model.Customer(
            dataset_id=1, customer_id='a', position=0, energy=5.0, peak=1.0))
        self.session.commit()

        self.session.add_all([
            model.Fit(fit_id=1, dataset_id=0, method='MQR',
                      formulation='C4', objective=0.5, payload='{}'),
            model.Fit(fit_id=2, dataset_id=0, method='MLE',
                      formulation='Gumbel', objective=3.0, payload='{}'),
            model.Fit(fit_id=3, dataset_id=0, method='MQR',
                      formulation='Gumbel', objective=0.6, payload='{}'),
            model.Fit(fit_id=4, dataset_id=1, method='MQR',
                      formulation='Gumbel', objective=0.7, payload='{}'),
        ])
        self.session.commit()

    def test_records(self):
        query = select.records(0)
        records = query.with_session(self.session).all()
        self.assertListEqual(
            [tuple(record) for record in records],
            [('d', 40.0, 2.0), ('a', 10.0, 1.0), ('c', 30.0, 4.0),
             ('b', 20.0, 3.0)]
        )

    def test_records_min_energy(self):
        query = select.records(0, min_energy=20.0)
        records = query.with_session(self.session).all()
        self.assertListEqual(
            [record.customer_id for record in records], ['d', 'c', 'b'])

    def test_records_energy_range(self):
        query = select.records(0, min_energy=15.0, max_energy=30.0)
        records = query.with_session(self.session).all()
        self.assertListEqual(
            [record.customer_id for record in records], ['c', 'b'])

    def test_records_other_dataset(self):
        query = select.records(1)
        records = query.with_session(self.session).all()
        self.assertListEqual([tuple(record) for record in records],
                             [('a', 5.0, 1.0)])

    def test_customer_ids(self):
        query = select.customer_ids(0)
        ids = query.with_session(self.session).all()
        self.assertListEqual(
            sorted(row[0] for row in ids), ['a', 'b', 'c', 'd'])

    def test_fits(self):
        query = select.fits(0)
        fits = query.with_session(self.session).all()
        self.assertListEqual([fit.fit_id for fit in fits], [1, 2, 3])

    def test_fits_method(self):
        query = select.fits(0, method='MQR')
        fits = query.with_session(self.session).all()
        self.assertListEqual([fit.fit_id for fit in fits], [1, 3])

    def test_fits_method_formulation(self):
        query = select.fits(0, method='MQR', formulation='Gumbel')
        fits = query.with_session(self.session).all()
        self.assertListEqual(
            [(fit.fit_id, fit.objective) for fit in fits], [(3, 0.6)])


if __name__ == '__main__':
    unittest.main()
