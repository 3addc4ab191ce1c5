"""
QuasiLocal Meshes
Cartesian orthotope meshes on [0,1]^dim with lexicographic node ordering,
element neighborhoods and coarse/fine nesting maps.

Node (i_1, ..., i_dim) has index i_1 + (N+1) i_2 (x_1 runs fastest); elements
are numbered the same way with N per axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from errors import MeshError

SUPPORTED_DIMS = (1, 2)


def is_power_of_two(value):
    return isinstance(value, (int, np.integer)) and value >= 1 and (value & (value - 1)) == 0


@dataclass(frozen=True)
class CartesianMesh:
    """Uniform mesh of [0,1]^dim with cells_per_axis cells along every axis"""

    dim: int
    cells_per_axis: int

    def __post_init__(self):
        if self.dim not in SUPPORTED_DIMS:
            raise MeshError(f"Unsupported dimension {self.dim}; only 1 and 2 are implemented")
        if not is_power_of_two(self.cells_per_axis) or self.cells_per_axis < 2:
            raise MeshError(f"cells_per_axis must be a power of two >= 2, got {self.cells_per_axis}")

    @property
    def nodes_per_axis(self):
        return self.cells_per_axis + 1

    @property
    def node_count(self):
        return self.nodes_per_axis ** self.dim

    @property
    def element_count(self):
        return self.cells_per_axis ** self.dim

    @property
    def side(self):
        return 1.0 / self.cells_per_axis

    @property
    def mesh_size(self):
        """Element diameter H"""
        return self.side * math.sqrt(self.dim)

    @property
    def node_shape(self):
        return (self.nodes_per_axis,) * self.dim

    @property
    def element_shape(self):
        return (self.cells_per_axis,) * self.dim

    def node_index(self, multi_index):
        """Flat node index of integer coordinates (axis 0 fastest)"""
        return np.ravel_multi_index(tuple(np.asarray(multi_index).T), self.node_shape, order='F')

    def node_multi_index(self, nodes):
        return np.stack(np.unravel_index(np.asarray(nodes), self.node_shape, order='F'), axis=-1)

    def element_index(self, multi_index):
        return np.ravel_multi_index(tuple(np.asarray(multi_index).T), self.element_shape, order='F')

    def element_multi_index(self, elements):
        return np.stack(np.unravel_index(np.asarray(elements), self.element_shape, order='F'), axis=-1)

    @cached_property
    def coordinates(self):
        """(m, dim) array of node coordinates"""
        return self.node_multi_index(np.arange(self.node_count)) * self.side

    @cached_property
    def element_nodes(self):
        """(element_count, 2^dim) vertex indices, increasing within each row"""
        # Axis 0 fastest: (0,0), (1,0), (0,1), (1,1)
        corners = np.array([c[::-1] for c in np.ndindex(*((2,) * self.dim))])
        origin = self.element_multi_index(np.arange(self.element_count))
        vertices = origin[:, None, :] + corners[None, :, :]
        return self.node_index(vertices.reshape(-1, self.dim)).reshape(self.element_count, -1)

    @cached_property
    def element_midpoints(self):
        return (self.element_multi_index(np.arange(self.element_count)) + 0.5) * self.side

    @cached_property
    def boundary_mask(self):
        idx = self.node_multi_index(np.arange(self.node_count))
        return np.any((idx == 0) | (idx == self.cells_per_axis), axis=1)

    @cached_property
    def interior_nodes(self):
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def boundary_nodes(self):
        return np.flatnonzero(self.boundary_mask)

    @property
    def interior_count(self):
        return self.interior_nodes.size

    @property
    def boundary_count(self):
        return self.boundary_nodes.size


def build_mesh(dim, cells_per_axis):
    """Build the Cartesian mesh of [0,1]^dim"""
    return CartesianMesh(dim=int(dim), cells_per_axis=int(cells_per_axis))


def classify_nodes(mesh):
    """Return (interior node indices, boundary node indices)"""
    return mesh.interior_nodes, mesh.boundary_nodes


def _element_mask(mesh, elements):
    mask = np.zeros(mesh.element_count, dtype=bool)
    mask[np.asarray(elements, dtype=int)] = True
    return mask.reshape(mesh.element_shape, order='F')


def _elements_touching_nodes(mesh, nodes):
    """Elements whose closure contains one of the nodes"""
    idx = mesh.node_multi_index(np.atleast_1d(nodes))
    mask = np.zeros(mesh.element_shape, dtype=bool)
    n = mesh.cells_per_axis
    for offset in np.ndindex(*((2,) * mesh.dim)):
        cell = idx - np.array(offset)
        keep = np.all((cell >= 0) & (cell < n), axis=1)
        mask[tuple(cell[keep].T)] = True
    return mask


def neighborhood(mesh, nodes=None, elements=None, ell=0):
    """
    Element indices of N^ell(seed).

    N^0 collects every element whose closure meets the (closed) seed; N^ell
    applies that enlargement ell more times. The seed is a node set, an
    element set, or both.
    """
    if ell < 0:
        raise MeshError(f"Neighborhood order must be >= 0, got {ell}")
    has_nodes = nodes is not None and np.size(nodes) > 0
    has_elements = elements is not None and np.size(elements) > 0
    if not (has_nodes or has_elements):
        raise MeshError("Neighborhood seed must not be empty")

    structure = np.ones((3,) * mesh.dim, dtype=bool)
    mask = np.zeros(mesh.element_shape, dtype=bool)
    if has_nodes:
        mask |= _elements_touching_nodes(mesh, nodes)
    if has_elements:
        mask |= ndimage.binary_dilation(_element_mask(mesh, elements), structure=structure)
    steps = min(ell, mesh.cells_per_axis)
    if steps:
        mask = ndimage.binary_dilation(mask, structure=structure, iterations=steps)
    return np.flatnonzero(mask.ravel(order='F'))


def element_patch_box(mesh, element, ell):
    """
    Index box [lo, hi) per axis of N^ell(element) for a single element.

    Equivalent to neighborhood(mesh, elements=[element], ell=ell) on Cartesian
    meshes, but without materializing the element set.
    """
    origin = mesh.element_multi_index(element)
    lo = np.maximum(origin - (ell + 1), 0)
    hi = np.minimum(origin + ell + 2, mesh.cells_per_axis)
    return lo, hi


def refinement_ratio(coarse_cells, fine_cells):
    """Integer refinement ratio between two nested meshes"""
    if fine_cells < coarse_cells or fine_cells % coarse_cells:
        raise MeshError(f"Meshes with {coarse_cells} and {fine_cells} cells per axis are not nested")
    return fine_cells // coarse_cells


@dataclass(frozen=True)
class NestingMap:
    """Coarse/fine mesh pair with the node and parent-element maps"""

    coarse: CartesianMesh
    fine: CartesianMesh

    @property
    def ratio(self):
        return self.fine.cells_per_axis // self.coarse.cells_per_axis

    @property
    def dim(self):
        return self.coarse.dim

    @cached_property
    def coarse_to_fine_node(self):
        idx = self.coarse.node_multi_index(np.arange(self.coarse.node_count))
        return self.fine.node_index(idx * self.ratio)

    @cached_property
    def fine_to_coarse_element(self):
        idx = self.fine.element_multi_index(np.arange(self.fine.element_count))
        return self.coarse.element_index(idx // self.ratio)

    def fine_nodes_in_box(self, lo, hi, open_box=False):
        """Fine node indices inside the coarse element box [lo, hi)"""
        r = self.ratio
        if open_box:
            ranges = [np.arange(l * r + 1, h * r) for l, h in zip(lo, hi)]
        else:
            ranges = [np.arange(l * r, h * r + 1) for l, h in zip(lo, hi)]
        grid = np.meshgrid(*ranges, indexing='ij')
        idx = np.stack([g.ravel(order='F') for g in grid], axis=-1)
        return self.fine.node_index(idx)

    def fine_elements_of(self, coarse_element):
        """Fine elements inside one coarse element, in fine lexicographic order"""
        origin = self.coarse.element_multi_index(coarse_element) * self.ratio
        ranges = [np.arange(o, o + self.ratio) for o in origin]
        grid = np.meshgrid(*ranges, indexing='ij')
        idx = np.stack([g.ravel(order='F') for g in grid], axis=-1)
        return self.fine.element_index(idx)


def build_nesting(coarse, fine):
    """Nesting map between a coarse mesh and a refinement of it"""
    if coarse.dim != fine.dim:
        raise MeshError(f"Cannot nest a {fine.dim}D mesh in a {coarse.dim}D mesh")
    refinement_ratio(coarse.cells_per_axis, fine.cells_per_axis)
    return NestingMap(coarse=coarse, fine=fine)
