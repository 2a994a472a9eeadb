from velander.api import Connection, DatasetHandle
from velander.evd import CanonicalParams, Formulation
from velander.version import __version__
