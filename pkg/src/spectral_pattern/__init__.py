"""Spectral graph convolution for building-pattern classification.

Building footprints are summarized by shape indices, wired into a spatial
graph (Delaunay or minimum spanning tree), and classified as regular or
irregular arrangements by a small graph convolutional network whose filters
are polynomials in the graph Laplacian.

Set SPECTRAL_PATTERN_THREADS before import to pin BLAS thread counts; the
training pipeline is deterministic for a fixed seed when run single-threaded.
"""

import os as _os

_threads = _os.environ.get("SPECTRAL_PATTERN_THREADS")
if _threads is not None:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

# public name -> defining submodule, resolved lazily so that importing the
# package does not drag in numpy until something is actually used
_EXPORTS = {
    "Point2": "geometry",
    "Polygon": "geometry",
    "BuildingFeatures": "geometry",
    "extract_features": "geometry",
    "GraphConfig": "graph",
    "SpatialGraph": "graph",
    "LaplacianMatrix": "graph",
    "EigenSystem": "graph",
    "build_spatial_graph": "graph",
    "laplacian": "graph",
    "eigendecompose": "graph",
    "SpectralKernel": "spectral",
    "PolynomialKernel": "spectral",
    "gft": "spectral",
    "igft": "spectral",
    "kernel_from_polynomial": "spectral",
    "spectral_convolve": "spectral",
    "polynomial_convolve": "spectral",
    "GcnnModel": "nn",
    "GraphSample": "nn",
    "TrainConfig": "nn",
    "build_model": "nn",
    "train": "nn",
    "evaluate": "nn",
    "predict": "nn",
    "BuildingGroup": "data",
    "Dataset": "data",
    "Standardizer": "data",
    "generate_synthetic_dataset": "data",
    "load_dataset": "data",
    "save_dataset": "data",
    "split_dataset": "data",
}

_SUBMODULES = ("cli", "data", "errors", "geometry", "graph", "nn", "spectral")

__all__ = sorted(_EXPORTS) + list(_SUBMODULES)


def __getattr__(name):
    import importlib

    if name in _EXPORTS:
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        value = getattr(module, name)
        globals()[name] = value
        return value
    if name in _SUBMODULES:
        module = importlib.import_module(f".{name}", __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(__all__))
