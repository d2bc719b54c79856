# Initial package marker
__version__ = "0.1.0"

from .errors import ConfigError, PlapError
from .mesh import Mesh, bisect, make_lshape_mesh, make_unit_disk_mesh
from .relaxation import Exponents, RelaxInterval

__all__ = [
    "ConfigError",
    "Exponents",
    "Mesh",
    "PlapError",
    "RelaxInterval",
    "bisect",
    "make_lshape_mesh",
    "make_unit_disk_mesh",
    "__version__",
]
