"""Direct simulation Monte Carlo of electron transport in suspended graphene.

Electron-phonon and screened electron-electron scattering in the conduction
band, with Pauli blocking enforced by rejection against a cell estimate of
the distribution function.
"""

from .engine import RunResult, SimConfig, TimeSeries, run
from .grid import GridSpec, OccupancyGrid
from .material import DEFAULT_MATERIAL, MaterialParams

__all__ = ["DEFAULT_MATERIAL", "GridSpec", "MaterialParams", "OccupancyGrid", "RunResult",
           "SimConfig", "TimeSeries", "run"]
