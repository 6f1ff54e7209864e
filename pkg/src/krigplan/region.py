"""Threshold classification and contiguous-region extraction.

Grid cells are labeled against the response threshold using both the
kriged mean and the confidence interval: a cell only counts as reliable
when its prediction is below threshold AND the interval upper bound is
too.  The deliverable region is the largest 4-connected component of
reliable and measured-passing cells, reported with its bounding box.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grid import Combination

RELIABLE_CANDIDATE = "reliable_candidate"
UNCERTAIN = "uncertain"
CONFIDENTLY_ABOVE = "confidently_above"
MEASURED_PASS = "measured_pass"
MEASURED_FAIL = "measured_fail"

LABELS = (RELIABLE_CANDIDATE, UNCERTAIN, CONFIDENTLY_ABOVE, MEASURED_PASS, MEASURED_FAIL)

# Labels eligible for the reliable region.
_REGION_LABELS = frozenset({RELIABLE_CANDIDATE, MEASURED_PASS})


def classify_grid(predictions, measurements, threshold: float, grid=None) -> dict[Combination, str]:
    """Label every predicted cell against the threshold.

    Measured cells are judged by their observed response alone (boundary
    inclusive: response == threshold passes).  Unmeasured cells are reliable
    only when mean and CI upper bound are both at or below threshold,
    confidently above when the CI lower bound exceeds it, and uncertain
    otherwise.  When ``grid`` is given, a prediction must exist for each of
    its points.
    """
    labels: dict[Combination, str] = {}
    measured = {m.location: m.response for m in measurements}
    for pred in predictions:
        loc = pred.location
        if loc in measured:
            labels[loc] = MEASURED_PASS if measured[loc] <= threshold else MEASURED_FAIL
        elif pred.mean <= threshold and pred.ci_upper <= threshold:
            labels[loc] = RELIABLE_CANDIDATE
        elif pred.ci_lower > threshold:
            labels[loc] = CONFIDENTLY_ABOVE
        else:
            labels[loc] = UNCERTAIN
    for loc in measured:
        if loc not in labels:
            raise ConfigurationError(f"no prediction covers measured location ({loc.m}, {loc.k})")
    if grid is not None:
        for loc in grid:
            if loc not in labels:
                raise ConfigurationError(f"no prediction covers grid point ({loc.m}, {loc.k})")
    return labels


@dataclass(frozen=True)
class RegionReport:
    """Largest reliable region: member cells (row-major) and bounding box."""

    cells: tuple[Combination, ...]
    cell_count: int
    m_min: float | None
    m_max: float | None
    k_min: float | None
    k_max: float | None

    @classmethod
    def empty(cls) -> "RegionReport":
        return cls((), 0, None, None, None, None)


def _index_maps(labels):
    ms = sorted({c.m for c in labels})
    ks = sorted({c.k for c in labels})
    mi = {v: i for i, v in enumerate(ms)}
    ki = {v: j for j, v in enumerate(ks)}
    return ms, ks, mi, ki


def largest_reliable_region(labels: dict[Combination, str], measurements=None,
                            threshold: float | None = None) -> RegionReport:
    """Largest 4-connected component of reliable/measured-pass cells.

    Adjacency is one step along either axis of the (complete) labeled grid.
    Size ties break toward the component whose smallest (m, k) cell is
    lexicographically least.  measurements/threshold are accepted for
    interface symmetry with classify_grid and cross-checked when given.
    """
    if measurements is not None and threshold is not None:
        for meas in measurements:
            got = labels.get(meas.location)
            want = MEASURED_PASS if meas.response <= threshold else MEASURED_FAIL
            if got != want:
                raise ConfigurationError(
                    f"label {got!r} at ({meas.location.m}, {meas.location.k}) does not match "
                    f"its measured response {meas.response}"
                )

    eligible = {c for c, lab in labels.items() if lab in _REGION_LABELS}
    if not eligible:
        return RegionReport.empty()

    _, _, mi, ki = _index_maps(labels)
    by_index = {(mi[c.m], ki[c.k]): c for c in eligible}

    components: list[list[Combination]] = []
    todo = set(by_index)
    while todo:
        start = todo.pop()
        stack = [start]
        comp = []
        while stack:
            i, j = stack.pop()
            comp.append(by_index[(i, j)])
            for nb in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if nb in todo:
                    todo.remove(nb)
                    stack.append(nb)
        components.append(comp)

    def anchor(comp):
        return min((c.m, c.k) for c in comp)

    best = min(components, key=lambda comp: (-len(comp), anchor(comp)))
    cells = tuple(sorted(best, key=lambda c: (c.m, c.k)))
    return RegionReport(
        cells=cells,
        cell_count=len(cells),
        m_min=min(c.m for c in cells),
        m_max=max(c.m for c in cells),
        k_min=min(c.k for c in cells),
        k_max=max(c.k for c in cells),
    )


def threshold_contour(predictions, threshold: float) -> list[list[tuple[float, float]]]:
    """Mean-surface level set at the threshold, as polylines in (m, k).

    Classic marching squares over the prediction grid with linear
    interpolation along cell edges; saddle cells are disambiguated by the
    cell-center mean.  A corner exactly at the threshold counts as the
    at-or-below side.  Returns [] when the surface never crosses.
    """
    preds = list(predictions)
    if not preds:
        return []
    ms = sorted({p.location.m for p in preds})
    ks = sorted({p.location.k for p in preds})
    mi = {v: i for i, v in enumerate(ms)}
    ki = {v: j for j, v in enumerate(ks)}
    values = np.full((len(ms), len(ks)), np.nan)
    for p in preds:
        values[mi[p.location.m], ki[p.location.k]] = p.mean
    if np.isnan(values).any():
        raise ConfigurationError("predictions do not cover a complete rectangular grid")
    if len(ms) < 2 and len(ks) < 2:
        return []

    above = values > threshold

    # Interpolated crossing points, one per grid edge, keyed so that both
    # cells sharing an edge reference the identical vertex.
    vertices: dict[tuple, tuple[float, float]] = {}

    def edge_vertex(axis, i, j):
        key = (axis, i, j)
        if key in vertices:
            return key
        if axis == "m":
            v0, v1 = values[i, j], values[i + 1, j]
            t = (threshold - v0) / (v1 - v0)
            vertices[key] = (float(ms[i] + t * (ms[i + 1] - ms[i])), float(ks[j]))
        else:
            v0, v1 = values[i, j], values[i, j + 1]
            t = (threshold - v0) / (v1 - v0)
            vertices[key] = (float(ms[i]), float(ks[j] + t * (ks[j + 1] - ks[j])))
        return key

    segments: list[tuple[tuple, tuple]] = []
    for i in range(len(ms) - 1):
        for j in range(len(ks) - 1):
            a = above[i, j]        # corner (i, j)
            b = above[i + 1, j]    # corner (i+1, j)
            c = above[i + 1, j + 1]
            d = above[i, j + 1]
            crossed = []
            if a != b:
                crossed.append(("m", i, j))
            if b != c:
                crossed.append(("k", i + 1, j))
            if d != c:
                crossed.append(("m", i, j + 1))
            if a != d:
                crossed.append(("k", i, j))
            if len(crossed) == 0:
                continue
            if len(crossed) == 2:
                segments.append((edge_vertex(*crossed[0]), edge_vertex(*crossed[1])))
            else:
                # Saddle: pair the crossings around whichever diagonal the
                # cell-center mean groups with.
                center_above = (values[i, j] + values[i + 1, j] + values[i + 1, j + 1] + values[i, j + 1]) / 4.0 > threshold
                e_ab = edge_vertex("m", i, j)
                e_bc = edge_vertex("k", i + 1, j)
                e_dc = edge_vertex("m", i, j + 1)
                e_ad = edge_vertex("k", i, j)
                if center_above == a:
                    segments.append((e_ab, e_bc))
                    segments.append((e_ad, e_dc))
                else:
                    segments.append((e_ab, e_ad))
                    segments.append((e_bc, e_dc))

    if not segments:
        return []

    adjacency: dict[tuple, list[tuple]] = {}
    for u, v in segments:
        adjacency.setdefault(u, []).append(v)
        adjacency.setdefault(v, []).append(u)

    visited_edges = set()
    polylines = []

    def walk(start):
        line = [start]
        node = start
        while True:
            nxt = None
            for cand in sorted(adjacency[node]):
                e = tuple(sorted((node, cand)))
                if e not in visited_edges:
                    visited_edges.add(e)
                    nxt = cand
                    break
            if nxt is None:
                break
            line.append(nxt)
            node = nxt
        return line

    # Open chains first (from endpoints of degree 1), then any leftover loops.
    endpoints = sorted(n for n, nbrs in adjacency.items() if len(nbrs) == 1)
    for start in endpoints:
        if all(tuple(sorted((start, nb))) in visited_edges for nb in adjacency[start]):
            continue
        polylines.append(walk(start))
    for start in sorted(adjacency):
        if all(tuple(sorted((start, nb))) in visited_edges for nb in adjacency[start]):
            continue
        polylines.append(walk(start))

    return [[vertices[node] for node in line] for line in polylines]
