"""Hierarchical clustering of the language distance matrix.

UPGMA (size-weighted average linkage) produces an ultrametric tree: every
merge sits at half the between-cluster distance, so the implied leaf-to-leaf
distances reproduce the cluster distances at merge time. Trees can be
serialized as Newick, SVG, or Graphviz dot.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .divergence import DistanceMatrix
from .errors import WeldError

logger = logging.getLogger(__name__)

# colorbrewer Dark2, used to color leaves by annotated family
_PALETTE = (
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a",
    "#66a61e", "#e6ab02", "#a6761d", "#666666",
)


class ClusteringError(WeldError):
    """Clustering or tree serialization failed."""


class Linkage(enum.Enum):
    AVERAGE = "average"
    COMPLETE = "complete"
    WARD = "ward"


@dataclass
class TreeNode:
    height: float
    label: str | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def leaves(self) -> list["TreeNode"]:
        if self.is_leaf:
            return [self]
        assert self.left is not None and self.right is not None
        return self.left.leaves() + self.right.leaves()


@dataclass
class Dendrogram:
    root: TreeNode
    labels: list[str]
    # merge sequence as (slot i, slot j, distance); a cluster's slot is the
    # smallest original leaf index it contains, and i < j
    merges: list[tuple[int, int, float]]


def upgma(matrix: DistanceMatrix, linkage: Linkage = Linkage.AVERAGE) -> Dendrogram:
    """Cluster a distance matrix bottom-up with average linkage.

    Each step merges the pair of active clusters at minimal distance (ties
    broken by smallest index pair), places the parent at distance / 2, and
    averages the merged columns weighted by cluster size. The merged cluster
    keeps the smaller of the two slots.
    """
    if linkage is not Linkage.AVERAGE:
        raise NotImplementedError(f"linkage {linkage.value!r} is not implemented")
    n = len(matrix.labels)
    if n < 2:
        raise ClusteringError(f"need at least 2 labels to cluster, got {n}")

    work = matrix.values.astype(np.float64).copy()
    nodes: dict[int, TreeNode] = {
        i: TreeNode(0.0, label=matrix.labels[i]) for i in range(n)
    }
    sizes: dict[int, int] = {i: 1 for i in range(n)}
    active = list(range(n))
    merges: list[tuple[int, int, float]] = []

    while len(active) > 1:
        best: tuple[float, int, int] | None = None
        for a in range(len(active)):
            for b in range(a + 1, len(active)):
                i, j = active[a], active[b]
                d = work[i, j]
                if best is None or (d, i, j) < best:
                    best = (d, i, j)
        assert best is not None
        d, i, j = best
        parent = TreeNode(d / 2.0, left=nodes[i], right=nodes[j])
        merges.append((i, j, float(d)))
        si, sj = sizes[i], sizes[j]
        for k in active:
            if k in (i, j):
                continue
            avg = (si * work[i, k] + sj * work[j, k]) / (si + sj)
            work[i, k] = avg
            work[k, i] = avg
        nodes[i] = parent
        sizes[i] = si + sj
        active.remove(j)

    return Dendrogram(nodes[active[0]], list(matrix.labels), merges)


def cophenetic_matrix(dendrogram: Dendrogram) -> np.ndarray:
    """Tree-implied distance between every leaf pair (2x the join height)."""
    index = {label: i for i, label in enumerate(dendrogram.labels)}
    n = len(dendrogram.labels)
    out = np.zeros((n, n), dtype=np.float64)

    def visit(node: TreeNode) -> list[int]:
        if node.is_leaf:
            assert node.label is not None
            return [index[node.label]]
        assert node.left is not None and node.right is not None
        left = visit(node.left)
        right = visit(node.right)
        for a in left:
            for b in right:
                out[a, b] = out[b, a] = 2.0 * node.height
        return left + right

    visit(dendrogram.root)
    return out


# ---------------------------------------------------------------------------
# serialization


def _newick_label(label: str) -> str:
    if any(ch in label for ch in " ()[]:;,'\t\n"):
        return "'" + label.replace("'", "''") + "'"
    return label


def to_newick(dendrogram: Dendrogram) -> str:
    """Newick string with branch lengths (parent height minus child height)."""

    def render(node: TreeNode, parent_height: float) -> str:
        if node.is_leaf:
            assert node.label is not None
            body = _newick_label(node.label)
        else:
            assert node.left is not None and node.right is not None
            body = f"({render(node.left, node.height)},{render(node.right, node.height)})"
        return f"{body}:{parent_height - node.height:.12g}"

    root = dendrogram.root
    if root.is_leaf:
        return _newick_label(root.label or "") + ";"
    assert root.left is not None and root.right is not None
    return (
        f"({render(root.left, root.height)},{render(root.right, root.height)});"
    )


def load_annotations(path: Path | str) -> dict[str, tuple[str, str]]:
    """Read `label<TAB>family[<TAB>subfamily]` rows."""
    out: dict[str, tuple[str, str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ClusteringError(
                    f"{path}:{lineno}: expected `label<TAB>family[<TAB>subfamily]`"
                )
            label, family = parts[0], parts[1]
            subfamily = parts[2] if len(parts) == 3 else ""
            if label in out:
                raise ClusteringError(f"{path}:{lineno}: duplicate label {label!r}")
            out[label] = (family, subfamily)
    return out


def _family_colors(
    labels: list[str], annotations: dict[str, tuple[str, str]] | None
) -> dict[str, str]:
    if not annotations:
        return {label: "#000000" for label in labels}
    known = set(labels)
    for label in sorted(annotations):
        if label not in known:
            logger.warning("annotation for unknown label %r ignored", label)
    families = sorted({fam for lab, (fam, _) in annotations.items() if lab in known})
    fam_color = {fam: _PALETTE[i % len(_PALETTE)] for i, fam in enumerate(families)}
    return {
        label: fam_color[annotations[label][0]] if label in annotations else "#000000"
        for label in labels
    }


def render_dendrogram(
    dendrogram: Dendrogram,
    format: str = "svg",
    annotations: dict[str, tuple[str, str]] | None = None,
) -> str:
    """Render the tree as an SVG drawing or a Graphviz dot graph."""
    if format == "svg":
        return _render_svg(dendrogram, annotations)
    if format == "dot":
        return _render_dot(dendrogram, annotations)
    raise ValueError(f"unknown render format {format!r}")


def _render_svg(
    dendrogram: Dendrogram, annotations: dict[str, tuple[str, str]] | None
) -> str:
    leaves = dendrogram.root.leaves()
    colors = _family_colors(dendrogram.labels, annotations)
    row = 24.0
    margin = 12.0
    plot_w = 480.0
    label_w = 8.0 * max(len(leaf.label or "") for leaf in leaves) + 16.0
    width = margin + plot_w + label_w + margin
    height = margin * 2 + row * len(leaves)
    scale = dendrogram.root.height or 1.0

    def x_of(node: TreeNode) -> float:
        return margin + (1.0 - node.height / scale) * plot_w

    leaf_y = {id(leaf): margin + row * (i + 0.5) for i, leaf in enumerate(leaves)}
    lines: list[str] = []
    texts: list[str] = []

    def visit(node: TreeNode) -> float:
        if node.is_leaf:
            y = leaf_y[id(node)]
            label = node.label or ""
            texts.append(
                f'<text x="{margin + plot_w + 6.0:.2f}" y="{y + 4.0:.2f}" '
                f'font-family="sans-serif" font-size="12" fill="{colors.get(label, "#000000")}">'
                f"{_xml_escape(label)}</text>"
            )
            return y
        assert node.left is not None and node.right is not None
        y_left = visit(node.left)
        y_right = visit(node.right)
        x = x_of(node)
        lines.append(_svg_line(x, y_left, x, y_right))
        lines.append(_svg_line(x, y_left, x_of(node.left), y_left))
        lines.append(_svg_line(x, y_right, x_of(node.right), y_right))
        return (y_left + y_right) / 2.0

    visit(dendrogram.root)
    body = "\n".join(lines + texts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">\n{body}\n</svg>\n'
    )


def _svg_line(x1: float, y1: float, x2: float, y2: float) -> str:
    return (
        f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
        f'stroke="#333333" stroke-width="1.5"/>'
    )


def _xml_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _dot_quote(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _render_dot(
    dendrogram: Dendrogram, annotations: dict[str, tuple[str, str]] | None
) -> str:
    colors = _family_colors(dendrogram.labels, annotations)
    lines = ["graph dendrogram {", "  rankdir=LR;"]
    counter = [0]

    def visit(node: TreeNode) -> str:
        if node.is_leaf:
            label = node.label or ""
            name = _dot_quote(label)
            lines.append(f"  {name} [shape=box, color={_dot_quote(colors.get(label, '#000000'))}];")
            return name
        assert node.left is not None and node.right is not None
        name = f"i{counter[0]}"
        counter[0] += 1
        lines.append(f'  {name} [shape=point, xlabel="{node.height:.6g}"];')
        for child in (node.left, node.right):
            child_name = visit(child)
            lines.append(
                f'  {name} -- {child_name} [label="{node.height - child.height:.6g}"];'
            )
        return name

    visit(dendrogram.root)
    lines.append("}")
    return "\n".join(lines) + "\n"
