from velander.model import Customer, Fit
from sqlalchemy.orm import Query


def records(dataset_id: int, min_energy: float = None,
            max_energy: float = None) -> Query:
    """Customer records of a dataset in insertion order, optionally
    restricted to an energy range"""

    query = Query([
        Customer.customer_id,
        Customer.energy,
        Customer.peak
    ]).filter(Customer.dataset_id == dataset_id)

    if min_energy is not None:
        query = query.filter(Customer.energy >= min_energy)
    if max_energy is not None:
        query = query.filter(Customer.energy <= max_energy)
    return query.order_by(Customer.position)


def customer_ids(dataset_id: int) -> Query:
    return Query([Customer.customer_id]).filter(
        Customer.dataset_id == dataset_id)


def fits(dataset_id: int, method: str = None,
         formulation: str = None) -> Query:
    """Stored fits of a dataset in creation order"""

    query = Query([
        Fit.fit_id,
        Fit.method,
        Fit.formulation,
        Fit.objective,
        Fit.payload
    ]).filter(Fit.dataset_id == dataset_id)

    if method is not None:
        query = query.filter(Fit.method == method)
    if formulation is not None:
        query = query.filter(Fit.formulation == formulation)
    return query.order_by(Fit.fit_id)
