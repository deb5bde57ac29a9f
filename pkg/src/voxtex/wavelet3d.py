"""Undecimated 3-D octant wavelet packets with an 8-tap Daubechies filter pair."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy import ndimage

from .volume_io import ScalarVolume

# db4 scaling filter (4 vanishing moments), normalised to sum sqrt(2)
_DB4 = np.array(
    [
        0.23037781330889650086,
        0.71484657055291564709,
        0.63088076792985890788,
        -0.027983769416859854211,
        -0.18703481171909308408,
        0.030841381835560763627,
        0.032883011666885199735,
        -0.010597401785069032105,
    ]
)

OCTANTS = tuple("".join(p) for p in itertools.product("LH", repeat=3))

_MODES = {"symmetric": "reflect", "periodic": "wrap"}


@dataclass(frozen=True)
class FilterPair:
    h0: np.ndarray
    h1: np.ndarray

    @property
    def length(self) -> int:
        return len(self.h0)

    def taps(self, band: str) -> np.ndarray:
        return self.h0 if band == "L" else self.h1


def qmf(h0) -> np.ndarray:
    """Highpass partner ``h1[k] = (-1)^k h0[N-1-k]``."""
    h0 = np.asarray(h0, dtype=float)
    k = np.arange(len(h0))
    return (-1.0) ** k * h0[::-1]


def daubechies8() -> FilterPair:
    h0 = _DB4.copy()
    return FilterPair(h0, qmf(h0))


def filter_axis(x: np.ndarray, taps: np.ndarray, axis: int, dilation: int = 1, boundary: str = "symmetric") -> np.ndarray:
    """Correlate ``x`` along ``axis`` with ``taps`` dilated by ``dilation``.

    ``y[n] = sum_k taps[k] * x[n + (k - c) * dilation]`` with ``c = (N - 1) // 2``
    so that outputs stay registered with the input voxels.
    """
    n = len(taps)
    w = np.zeros((n - 1) * dilation + 1)
    w[::dilation] = taps
    centre = ((n - 1) // 2) * dilation
    origin = centre - len(w) // 2
    return ndimage.correlate1d(x, w, axis=axis, mode=_MODES[boundary], origin=origin)


def analyze_octants(v, f: FilterPair | None = None, level: int = 0, boundary: str = "symmetric") -> dict[str, np.ndarray]:
    """Split a volume into its 8 undecimated octant sub-bands.

    ``level`` sets the à-trous dilation ``2 ** level``. Keys are the three
    letter band codes for the x, y and z axes (``"LLL"`` ... ``"HHH"``).
    """
    f = f or daubechies8()
    x = np.asarray(getattr(v, "data", v), dtype=float)
    if min(x.shape) < f.length:
        raise ValueError(f"volume dims {x.shape} are smaller than the {f.length}-tap filter support")
    d = 2**level
    out = {}
    first = {b: filter_axis(x, f.taps(b), 0, d, boundary) for b in "LH"}
    for bx in "LH":
        second = {b: filter_axis(first[bx], f.taps(b), 1, d, boundary) for b in "LH"}
        for by in "LH":
            for bz in "LH":
                out[bx + by + bz] = filter_axis(second[by], f.taps(bz), 2, d, boundary)
    return {k: out[k] for k in OCTANTS}


@dataclass
class SubbandNode:
    volume: ScalarVolume
    level: int
    path: str
    fractal_signature: float | None = None

    @property
    def octant(self) -> str:
        return self.path.rsplit("/", 1)[-1] if self.path else ""


@dataclass
class SubbandTree:
    root: ScalarVolume
    nodes: list[SubbandNode] = field(default_factory=list)
    max_level: int = 3
    expanded: list[str] = field(default_factory=list)

    def level(self, i: int) -> list[SubbandNode]:
        return [n for n in self.nodes if n.level == i]

    @property
    def depth(self) -> int:
        return max(n.level for n in self.nodes)


class ExpansionController(Protocol):
    def signature(self, node: SubbandNode) -> float: ...

    def should_expand(self, levels: list[list[SubbandNode]]) -> bool: ...


@dataclass
class CallbackController:
    """Controller from two plain callables."""

    signature_fn: Callable[[SubbandNode], float]
    expand_fn: Callable[[list[list[SubbandNode]]], bool]

    def signature(self, node):
        return self.signature_fn(node)

    def should_expand(self, levels):
        return self.expand_fn(levels)


def expand_tree(root: ScalarVolume, f: FilterPair | None, controller, max_level: int = 3) -> SubbandTree:
    """Greedy best-basis expansion.

    Level by level, the node with the largest fractal signature among the
    newest level (ties: first octant in ``OCTANTS`` order) is split into its
    8 octants. ``controller.should_expand`` sees all levels built so far and
    may stop the descent; ``max_level`` caps it.
    """
    f = f or daubechies8()
    root_node = SubbandNode(root, 0, "")
    tree = SubbandTree(root, [root_node], max_level)
    levels = [[root_node]]
    while len(levels) - 1 < max_level and controller.should_expand(levels):
        frontier = levels[-1]
        # max() keeps the first maximal node, i.e. the earliest octant on ties
        parent = max(frontier, key=lambda n: n.fractal_signature if n.fractal_signature is not None else -np.inf)
        bands = analyze_octants(parent.volume, f, level=parent.level)
        children = []
        for code in OCTANTS:
            path = code if not parent.path else f"{parent.path}/{code}"
            vol = ScalarVolume(bands[code], root.spacing, kind="wavelet_coeff", name=path)
            node = SubbandNode(vol, parent.level + 1, path)
            node.fractal_signature = float(controller.signature(node))
            children.append(node)
        tree.expanded.append(parent.path)
        tree.nodes.extend(children)
        levels.append(children)
    return tree
