"""Learned adaptive mesh generation from expert meshes.

The package predicts scalar sizing fields on intermediate meshes with a
hierarchical message-passing network, regenerates meshes from those fields,
and trains the predictor from expert meshes via projected labels and a
replay buffer.
"""

from .errors import (AdameshError, GeometryError, MeshError,
                     MeshGenerationError, NumericalError)
from .geometry import (GaussianMixture, Geometry, ProcessConditions, contains,
                       sample_beam, sample_gmm_dirichlet, sample_gmm_load,
                       sample_lattice, sample_lshape)
from .mesh import (DiscreteSizingField, ElementSizingField, SimplicialMesh,
                   element_sizing, element_volume, interpolate, locate,
                   project_labels, vertex_sizing)
from .meshgen import (GeneratorConfig, apply_budget, clip_sizing, generate_1d,
                      generate_2d)

__version__ = "0.1.0"

__all__ = [
    "AdameshError", "GeometryError", "MeshError", "MeshGenerationError",
    "NumericalError", "GaussianMixture", "Geometry", "ProcessConditions",
    "contains", "sample_beam", "sample_gmm_dirichlet", "sample_gmm_load",
    "sample_lattice", "sample_lshape", "DiscreteSizingField",
    "ElementSizingField", "SimplicialMesh", "element_sizing", "element_volume",
    "interpolate", "locate", "project_labels", "vertex_sizing",
    "GeneratorConfig", "apply_budget", "clip_sizing", "generate_1d",
    "generate_2d",
]
