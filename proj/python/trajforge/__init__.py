# SPDX-License-Identifier: Apache-2.0
"""Curation pipeline for DFT relaxation trajectories."""

from ._core import (
    __version__,
    assemble_trajectories,
    balance_sources,
    canonical_frame_id,
    canonical_json,
    canonical_trajectory_id,
    delta_e_profile,
    element_index,
    fit_pca,
    format_float,
    formation_energy_per_atom,
    is_known_element,
    max_force_norm,
    parse_frame,
    pca_project,
    run_filters,
    run_pipeline,
    serialize_frame,
    soap_descriptor,
    soap_dimension,
    stratified_split,
    trajectory_length_histogram,
    transform_record,
    validate_config,
    validate_frame,
)

__all__ = [
    "__version__",
    "assemble_trajectories",
    "balance_sources",
    "canonical_frame_id",
    "canonical_json",
    "canonical_trajectory_id",
    "delta_e_profile",
    "element_index",
    "fit_pca",
    "format_float",
    "formation_energy_per_atom",
    "is_known_element",
    "max_force_norm",
    "parse_frame",
    "pca_project",
    "run_filters",
    "run_pipeline",
    "serialize_frame",
    "soap_descriptor",
    "soap_dimension",
    "stratified_split",
    "trajectory_length_histogram",
    "transform_record",
    "validate_config",
    "validate_frame",
]
