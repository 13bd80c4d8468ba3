"""swift_sr: compact single-image super-resolution GAN engine.

Submodules are imported lazily by the CLI so that thread-count environment
variables can take effect before numpy loads its BLAS backend. Library users
import submodules directly, e.g. ``from swift_sr import models``.
"""

__version__ = "0.1.0"
