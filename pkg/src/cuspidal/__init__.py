"""Kinematic analysis of 3R serial chains: IK, singular curves, cusps,
classification and path feasibility."""
from .model import (DHParams, ILLUSTRATIVE, InvalidParams, JointConfig, ManipulatorModel,
                    NotScalable, normalize, orthogonal_params, validate_params)
from .kinematics import WorkspacePoint, cross_section, det_jacobian, forward, jacobian
from .ik import count_ik, solve_ik
from .singular import analyze, compute_aspects, find_cusps, find_nodes
from .classify import ClassificationReport, is_cuspidal

__all__ = [
    "DHParams", "ILLUSTRATIVE", "InvalidParams", "JointConfig", "ManipulatorModel",
    "NotScalable", "normalize", "orthogonal_params", "validate_params",
    "WorkspacePoint", "cross_section", "det_jacobian", "forward", "jacobian",
    "count_ik", "solve_ik", "analyze", "compute_aspects", "find_cusps", "find_nodes",
    "ClassificationReport", "is_cuspidal",
]
