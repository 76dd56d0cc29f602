"""Whitney-type extension of finite 1-jets."""
import os

# the TBB probe warns on older installs; workqueue is always available
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .domain import DomainSample, build_graph, inner_modulus, qc_constant, wg_from_quasiconvex
from .envelope import EnvelopeSpec, envelope_grid, h_eval, H_eval
from .grid import GridFunction, make_grid, read_grid, write_grid
from .jet import JetDataset, concave_wg_modulus, lip_and_bound_stats, load_jets, wg_constant, wtilde_profile
from .modulus import Modulus, PiecewiseLinear, Power, empirical_modulus, least_concave_majorant, parse_modulus, primitive
from .regularize import glue, insert_c11, insert_general, radial_partition

__version__ = "0.1.0"
