"""2-D projection of embedding sets and SVG scatter rendering.

Projection is classical (Torgerson) multidimensional scaling: square the
distances, double-center, take the top two eigenpairs. Deterministic by
construction; eigenvector sign is fixed so the largest-magnitude entry is
positive. The scatter encodes class as marker shape and polarity as color.
"""

import csv
from dataclasses import dataclass
from xml.etree import ElementTree as ET

import numpy as np

from .errors import (
    AsymmetricInputError,
    DatasetTooSmallError,
    DegenerateDistancesError,
    DimensionMismatchError,
    InvalidConfigError,
)
from .labels import HierLabel, Polarity

POLARITY_COLORS = {
    Polarity.POSITIVE: "#000000",
    Polarity.NEUTRAL: "#808080",
    Polarity.NEGATIVE: "#FF0000",
}
MARKER_SHAPES = ("circle", "square", "triangle", "diamond", "cross")

PLOT_SIZE = 600.0
LEGEND_WIDTH = 170.0
MARKER_SIZE = 4.0


@dataclass
class Mds2D:
    coords: np.ndarray
    eigenvalues: np.ndarray
    stress: float


def _euclidean_matrix(x: np.ndarray) -> np.ndarray:
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(np.maximum(d2, 0.0))


def classical_mds(points, input_kind: str = "auto") -> Mds2D:
    """Project N points (or an N x N distance matrix) to the plane.

    Auto mode treats a square matrix with a zero diagonal as distances and
    anything else as point coordinates (Euclidean metric). Stress is the
    normalized residual sqrt(sum (d_hat - d)^2 / sum d^2) over unordered
    pairs.
    """
    if input_kind not in ("auto", "points", "distances"):
        raise InvalidConfigError("input_kind must be auto, points, or distances")
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError("input must be 2-D")
    n = arr.shape[0]
    if n < 3:
        raise DatasetTooSmallError(f"need at least 3 points, got {n}")

    if input_kind == "auto":
        square = arr.shape[0] == arr.shape[1]
        input_kind = (
            "distances"
            if square and np.all(np.abs(np.diagonal(arr)) <= 1e-12)
            else "points"
        )

    if input_kind == "distances":
        if arr.shape[0] != arr.shape[1]:
            raise DimensionMismatchError("distance matrix must be square")
        if not np.allclose(arr, arr.T, atol=1e-9, rtol=0.0):
            raise AsymmetricInputError("distance matrix is not symmetric")
        if np.any(arr < -1e-12):
            raise InvalidConfigError("distances must be non-negative")
        dist = np.maximum((arr + arr.T) / 2.0, 0.0)
        np.fill_diagonal(dist, 0.0)
    else:
        dist = _euclidean_matrix(arr)

    if np.all(dist == 0.0):
        raise DegenerateDistancesError("all pairwise distances are zero")

    d2 = dist * dist
    row = d2.mean(axis=1, keepdims=True)
    col = d2.mean(axis=0, keepdims=True)
    gram = -0.5 * (d2 - row - col + d2.mean())
    gram = (gram + gram.T) / 2.0

    eigvals, eigvecs = np.linalg.eigh(gram)
    coords = np.empty((n, 2))
    top = np.empty(2)
    for k, i in enumerate((n - 1, n - 2)):
        vec = eigvecs[:, i]
        if vec[int(np.argmax(np.abs(vec)))] < 0.0:
            vec = -vec
        top[k] = eigvals[i]
        coords[:, k] = vec * np.sqrt(max(eigvals[i], 0.0))
    coords -= coords.mean(axis=0)

    iu = np.triu_indices(n, k=1)
    d_hat = _euclidean_matrix(coords)[iu]
    d_in = dist[iu]
    stress = float(np.sqrt(((d_hat - d_in) ** 2).sum() / (d_in**2).sum()))
    return Mds2D(coords=coords, eigenvalues=top, stress=stress)


def _marker_element(shape: str, cx: float, cy: float, color: str, css_class: str) -> ET.Element:
    s = MARKER_SIZE
    if shape == "circle":
        el = ET.Element("circle", cx=f"{cx:.2f}", cy=f"{cy:.2f}", r=f"{s:.2f}")
    elif shape == "square":
        el = ET.Element(
            "rect",
            x=f"{cx - s:.2f}",
            y=f"{cy - s:.2f}",
            width=f"{2 * s:.2f}",
            height=f"{2 * s:.2f}",
        )
    elif shape == "triangle":
        pts = [(cx, cy - s), (cx - s, cy + s), (cx + s, cy + s)]
        el = ET.Element("polygon", points=" ".join(f"{x:.2f},{y:.2f}" for x, y in pts))
    elif shape == "diamond":
        pts = [(cx, cy - s), (cx + s, cy), (cx, cy + s), (cx - s, cy)]
        el = ET.Element("polygon", points=" ".join(f"{x:.2f},{y:.2f}" for x, y in pts))
    else:  # cross: two stroked diagonals in one path
        el = ET.Element(
            "path",
            d=(
                f"M {cx - s:.2f} {cy - s:.2f} L {cx + s:.2f} {cy + s:.2f} "
                f"M {cx - s:.2f} {cy + s:.2f} L {cx + s:.2f} {cy - s:.2f}"
            ),
        )
        el.set("stroke-width", "1.5")
    if shape == "cross":
        el.set("stroke", color)
        el.set("fill", "none")
    else:
        el.set("fill", color)
    el.set("class", css_class)
    return el


def marker_shape_for_class(class_id: int) -> str:
    return MARKER_SHAPES[class_id % len(MARKER_SHAPES)]


def emit_svg_scatter(
    mds: Mds2D,
    labels: list[HierLabel],
    class_names: list[str],
    out_path: str,
    ids: list[str] | None = None,
    csv_path: str | None = None,
) -> None:
    """Write an SVG 1.1 scatter of the projected points.

    One marker element per point (class = shape, polarity = color), plus a
    legend column. Optionally also writes a CSV of (id, x, y, class,
    polarity).
    """
    coords = np.asarray(mds.coords, dtype=np.float64)
    if coords.shape[0] != len(labels):
        raise DimensionMismatchError("one label per projected point required")
    if ids is not None and len(ids) != len(labels):
        raise DimensionMismatchError("one id per projected point required")

    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = np.where(hi - lo > 0.0, hi - lo, 1.0)
    lo = lo - 0.05 * span
    hi = hi + 0.05 * span
    span = hi - lo

    def to_px(pt: np.ndarray) -> tuple[float, float]:
        x = (pt[0] - lo[0]) / span[0] * PLOT_SIZE
        y = (hi[1] - pt[1]) / span[1] * PLOT_SIZE
        return float(x), float(y)

    width = PLOT_SIZE + LEGEND_WIDTH
    root = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        version="1.1",
        width=f"{width:.0f}",
        height=f"{PLOT_SIZE:.0f}",
        viewBox=f"0 0 {width:.0f} {PLOT_SIZE:.0f}",
    )
    ET.SubElement(
        root, "rect", x="0", y="0", width=f"{width:.0f}", height=f"{PLOT_SIZE:.0f}", fill="#FFFFFF"
    )

    points_group = ET.SubElement(root, "g", id="points")
    for i, label in enumerate(labels):
        cx, cy = to_px(coords[i])
        shape = marker_shape_for_class(label.class_id)
        color = POLARITY_COLORS[label.polarity]
        points_group.append(_marker_element(shape, cx, cy, color, "marker"))

    legend = ET.SubElement(root, "g", id="legend")
    lx = PLOT_SIZE + 16.0
    ly = 24.0
    for class_id, name in enumerate(class_names):
        shape = marker_shape_for_class(class_id)
        legend.append(_marker_element(shape, lx, ly, "#000000", "legend-marker"))
        text = ET.SubElement(
            legend, "text", x=f"{lx + 12.0:.2f}", y=f"{ly + 4.0:.2f}"
        )
        text.set("font-size", "12")
        text.text = name
        ly += 18.0
    ly += 8.0
    for polarity in (Polarity.POSITIVE, Polarity.NEUTRAL, Polarity.NEGATIVE):
        legend.append(
            _marker_element("square", lx, ly, POLARITY_COLORS[polarity], "legend-marker")
        )
        text = ET.SubElement(
            legend, "text", x=f"{lx + 12.0:.2f}", y=f"{ly + 4.0:.2f}"
        )
        text.set("font-size", "12")
        text.text = polarity.value
        ly += 18.0

    ET.ElementTree(root).write(out_path, encoding="UTF-8", xml_declaration=True)

    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "x", "y", "class", "polarity"])
            for i, label in enumerate(labels):
                writer.writerow(
                    [
                        ids[i] if ids is not None else str(i),
                        repr(float(coords[i, 0])),
                        repr(float(coords[i, 1])),
                        class_names[label.class_id],
                        label.polarity.value,
                    ]
                )
