"""neoRL: navigation agents built from per-place-cell value functions."""

from neorl.nres import CellId, LayerSpec, NresStack, activation_vector, cell_count, locate
from neorl.ovf import Action, LearnerParams, OvfBank, new_bank, restore, snapshot, step_update
from neorl.composer import ElementOfInterest, q_field, rewarded_cells, select_action
from neorl.waterworld import WorldConfig, WorldState, observe, reset, step

__version__ = "0.1.0"

__all__ = [
    "Action",
    "CellId",
    "ElementOfInterest",
    "LayerSpec",
    "LearnerParams",
    "NresStack",
    "OvfBank",
    "WorldConfig",
    "WorldState",
    "activation_vector",
    "cell_count",
    "locate",
    "new_bank",
    "observe",
    "q_field",
    "reset",
    "restore",
    "rewarded_cells",
    "select_action",
    "snapshot",
    "step",
    "step_update",
]
