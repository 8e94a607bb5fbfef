"""Kernel backend dispatch: numba when available unless the numpy flag is set."""

from ._backend import BACKEND, PURE_NUMPY

if PURE_NUMPY:
    from . import _kernels_numpy as impl
else:
    from . import _kernels_numba as impl

coupled_step = impl.coupled_step
langevin_step = impl.langevin_step
field_harmonic = impl.field_harmonic
field_pairwise = impl.field_pairwise
field_external = impl.field_external
group_means = impl.group_means
normals_block = impl.normals_block
ramp_weights = impl.ramp_weights

__all__ = ["BACKEND", "coupled_step", "langevin_step", "field_harmonic", "field_pairwise",
           "field_external", "group_means", "normals_block", "ramp_weights"]
