"""sasslift: lift textual NVIDIA SASS disassembly to typed, SSA-form IR.

The pipeline recovers three erased structures: control flow (predicate-
aware CFG, psi-function select lowering, SSA), multi-instruction
semantic operations (unification-based pattern aggregation), and
register types (lattice constraint propagation with conflict-driven
bitcast insertion).  A built-in reference interpreter executes the
emitted IR under a sequential-CTA, cooperative-thread model for
validation, and the metrics module reproduces the standard
characterization measurements.
"""

from .pipeline import LiftError, ModuleLift, PipelineConfig, lift_path, lift_text

__all__ = ["PipelineConfig", "ModuleLift", "LiftError", "lift_text",
           "lift_path", "__version__"]

__version__ = "0.1.0"
