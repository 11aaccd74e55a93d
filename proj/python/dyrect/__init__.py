"""Event-based 4D CT reconstruction: per-voxel transition times from a continuous scan."""

from ._dyrect import (
    AcquisitionGeometry,
    BeamType,
    DataError,
    EventVolume,
    NumericalError,
    ProjectionSet,
    ReconParams,
    VoxelGrid3,
    __version__,
    detect_event_time,
    difference_sinogram,
    forward_project,
    mae_transition,
    project_static,
    read_event_volume,
    read_projections,
    reconstruct_dyrect,
    reconstruct_sirt,
    run_pipeline,
    write_event_volume,
    write_projections,
)

__all__ = [
    "AcquisitionGeometry",
    "BeamType",
    "DataError",
    "EventVolume",
    "NumericalError",
    "ProjectionSet",
    "ReconParams",
    "VoxelGrid3",
    "__version__",
    "detect_event_time",
    "difference_sinogram",
    "forward_project",
    "mae_transition",
    "project_static",
    "read_event_volume",
    "read_projections",
    "reconstruct_dyrect",
    "reconstruct_sirt",
    "run_pipeline",
    "write_event_volume",
    "write_projections",
]
