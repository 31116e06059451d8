"""Selects the grid-posterior kernel implementation at import time.

Prefers the compiled extension; falls back to the NumPy twin when the
extension was not built.  ``KERNEL_IMPL`` records which one is active so the
benchmark and diagnostics can report it.
"""

try:
    from priorpool._nimass import ni_mass

    KERNEL_IMPL = "compiled"
except ImportError:  # pragma: no cover - depends on build environment
    from priorpool._nimass_py import ni_mass

    KERNEL_IMPL = "python"

__all__ = ["ni_mass", "KERNEL_IMPL"]
