"""Linear quadratic tracking over behavioral models by operator splitting."""

from .behavior import (
    BasisRep,
    HankelRep,
    StateSpaceRep,
    collect_data,
    hankel,
    hankel_basis,
    persistency_check,
    simulate,
    ss_basis,
)
from .errors import *  # noqa: F401,F403
from .lqt import LqtProblem, constrained_oracle_solve, cost_eval, oracle_solve
from .mpc import Disturbance, MpcSettings, mpc_run
from .network import build_network, centralized_projector, network_projectors
from .projection import (
    AffineBehaviorProjector,
    BoxProjector,
    CouplingProjector,
    HalfspaceProjector,
    PrefixProjector,
    ProductProjector,
    SubspaceProjector,
    dykstra,
    von_neumann,
)
from .splitting import SplitConfig, SolveReport, dy_solve, fb_solve, split_pro_solve
from .trajectory import Partition, Trajectory, concat, restrict

__version__ = "0.1.0"
