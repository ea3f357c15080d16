"""Victim-side model of the encryptor: traversal, thread assignment,
intermittent encryption, footer and mtime stamping."""

from .corpus import ENCRYPTED_SUFFIX, LAB_DIR, MARKER_FILE, FileMeta, Traversal, strip_suffix, traverse
from .crypto import (
    FOOTER_SIZE,
    MIB,
    EncryptedFooter,
    OffsetPlan,
    apply_plan,
    ctr_keystream,
    encrypt_file,
    generate_rsa_key,
    offset_plan,
)
from .manifest import FileRecord, InfectionRecord
from .scheduler import CostModel, Schedule, assign, run_schedule
from .simulate import SimConfig, SimulationResult, manifest_path, simulate

__all__ = [
    "ENCRYPTED_SUFFIX", "LAB_DIR", "MARKER_FILE", "FileMeta", "Traversal", "strip_suffix", "traverse",
    "FOOTER_SIZE", "MIB", "EncryptedFooter", "OffsetPlan", "apply_plan", "ctr_keystream",
    "encrypt_file", "generate_rsa_key", "offset_plan", "FileRecord", "InfectionRecord",
    "CostModel", "Schedule", "assign", "run_schedule", "SimConfig", "SimulationResult",
    "manifest_path", "simulate",
]
