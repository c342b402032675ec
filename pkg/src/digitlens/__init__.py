"""Missing-digit sets: Fourier l1 bounds, cell counts near manifolds and
arithmetic coverage experiments."""

from .core import (CellAddress, DigitSystem, MeasureValue, PowerBaseSystem, ProductSystem,
                   cell_box, cell_measure, children, enumerate_cells, hausdorff_dim,
                   representative_point, root, system_from_json)

__all__ = [
    "CellAddress", "DigitSystem", "MeasureValue", "PowerBaseSystem", "ProductSystem",
    "cell_box", "cell_measure", "children", "enumerate_cells", "hausdorff_dim",
    "representative_point", "root", "system_from_json",
]

__version__ = "0.1.0"
