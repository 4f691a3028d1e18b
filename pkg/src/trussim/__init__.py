"""Design-imitation agents for 2D truss structures.

The pipeline: parametric truss states rasterize to 76x76 images; a
convolutional autoencoder embeds them; a transition network predicts the next
embedding from the 5 most recent ones; the decoded prediction minus the
current image is a suggestion heatmap; rule-based inference turns the heatmap
into a parametric operation; teams of such agents iterate and periodically
adopt their best design, scored by factor of safety, mass, and
strength-to-weight ratio.
"""

__version__ = "0.1.0"

from .truss import (D_MIN, S_MAX, Canvas, DesignOp, InvalidOp, Load, Material,
                    Node, ProblemDef, Support, TrussDesign, apply_op,
                    default_problem, design_hash, hanging_nodes, state_record,
                    validate_design)
from .analysis import (EvalResult, denoise_trajectory, evaluate, restricted_swr,
                       solve_statics)
from .imaging import rasterize, signed_diff, ssim
from .inference import Candidate, InferenceConfig, build_candidates, infer, select_op
from .data import Demonstration, load_demonstrations, make_windows, save_demonstrations, \
    split, synth_demonstrations
from .simulation import (AgentState, TeamConfig, agent_step, random_start,
                         run_experiment, run_team, team_interact)

__all__ = [
    "D_MIN", "S_MAX", "Canvas", "DesignOp", "InvalidOp", "Load", "Material",
    "Node", "ProblemDef", "Support", "TrussDesign", "apply_op",
    "default_problem", "design_hash", "hanging_nodes", "state_record",
    "validate_design", "EvalResult", "denoise_trajectory", "evaluate",
    "restricted_swr", "solve_statics", "rasterize", "signed_diff", "ssim",
    "Candidate", "InferenceConfig", "build_candidates", "infer", "select_op",
    "Demonstration", "load_demonstrations", "make_windows",
    "save_demonstrations", "split", "synth_demonstrations", "AgentState",
    "TeamConfig", "agent_step", "random_start", "run_experiment", "run_team",
    "team_interact",
]
