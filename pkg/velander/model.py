from sqlalchemy import Column, Integer, Float, CheckConstraint, String
from sqlalchemy import PrimaryKeyConstraint, ForeignKey, Index
from sqlalchemy.orm import declarative_base, relationship
Base = declarative_base()


class Dataset(Base):
    """ A set of customer records, typically one segment in one year """
    __tablename__ = 'dataset'
    dataset_id = Column(Integer, primary_key=True)
    segment = Column(String, nullable=True)
    year = Column(Integer, nullable=True)
    meta = Column(String, nullable=True)

    def __repr__(self):
        return "<Dataset(dataset_id={}, segment={}, year={})>".format(
            self.dataset_id, self.segment, self.year)


class Customer(Base):
    """The reduced (energy, peak) record of one customer"""

    __tablename__ = 'customer'
    __table_args__ = (
        PrimaryKeyConstraint('dataset_id', 'customer_id'),
        Index('customer_position_idx', 'dataset_id', 'position'),
    )

    dataset_id = Column(Integer, ForeignKey("dataset.dataset_id"))
    customer_id = Column(String)
    # insertion order, records are read back in this order
    position = Column(Integer, nullable=False)
    energy = Column(
        Float,
        CheckConstraint("energy>=0", name="energy_min_check"),
        nullable=False
    )
    peak = Column(
        Float,
        CheckConstraint("peak>=0", name="peak_min_check"),
        nullable=False
    )

    dataset = relationship('Dataset', backref='customers')

    def __repr__(self):
        return "<Customer(customer_id={}, energy={}, peak={}, \
        dataset_id={})>".format(
            self.customer_id, self.energy, self.peak, self.dataset_id)


class Fit(Base):
    """A fitted model serialised as JSON"""

    __tablename__ = 'fit'

    fit_id = Column(Integer, primary_key=True)
    dataset_id = Column(
        Integer, ForeignKey("dataset.dataset_id"), nullable=False, index=True)
    method = Column(
        String,
        CheckConstraint("method in ('MQR', 'MLE')", name="method_check"),
        nullable=False
    )
    formulation = Column(String, nullable=False)
    objective = Column(Float, nullable=True)
    payload = Column(String, nullable=False)

    def __repr__(self):
        return "<Fit(fit_id={}, method={}, formulation={}, \
        dataset_id={})>".format(
            self.fit_id, self.method, self.formulation, self.dataset_id)
