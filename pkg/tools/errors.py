# tools/errors.py

class Bands2DError(Exception):
    """Base class for every failure raised by the toolkit"""


class ConfigError(Bands2DError):
    """Invalid parameters or malformed run configuration"""


class LatticeError(Bands2DError):
    """Degenerate basis, invalid symmetry element or off-lattice vector"""


class KernelSingularityError(Bands2DError):
    """Evaluation of the periodic kernel too close to a lattice point"""


class SolverError(Bands2DError):
    """A numerical solver could not produce a result"""


class ConvergenceError(SolverError):
    """An iterative solver ran out of iterations"""


class InsufficientBandsError(SolverError):
    """Too few bands were computed to place the Fermi level"""


class InsufficientSamplesError(SolverError):
    """Not enough samples for a fit"""
