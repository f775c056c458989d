"""Structure and content metrics for predicted vs. reference tables."""

from .adjacency import adjacency_edges, adjacency_f1
from .grits import grits_top
from .tree_edit import (
    EmptyGroundTruth,
    MetricScore,
    TreeNode,
    build_table_tree,
    s_teds,
    teds,
    tree_edit_distance,
    tree_size,
)

__all__ = [
    "EmptyGroundTruth",
    "MetricScore",
    "TreeNode",
    "build_table_tree",
    "tree_edit_distance",
    "tree_size",
    "teds",
    "s_teds",
    "adjacency_edges",
    "adjacency_f1",
    "grits_top",
]
