"""Learned tool-tip model with a per-grasp latent input, plus an arm simulator to exercise it."""

from .mlp import Mlp, forward, backward, init_mlp, load_model, save_model
from .sim import ArmModel, GraspTruth, ToolModel, pr2_like_arm, musashi_like_arm, tool_tip
from .dataset import TrainSet, collect_sim
from .trainer import TrainConfig, train_offline, finetune
from .adapt import OnlineBuffer, LatentUpdater, WeightUpdater, update_latent
from .controller import ControllerConfig, AnchorTo, FreezeJoints, optimize_command, estimate_tip

__version__ = "0.1.0"

__all__ = [
    "Mlp", "forward", "backward", "init_mlp", "load_model", "save_model",
    "ArmModel", "GraspTruth", "ToolModel", "pr2_like_arm", "musashi_like_arm", "tool_tip",
    "TrainSet", "collect_sim", "TrainConfig", "train_offline", "finetune",
    "OnlineBuffer", "LatentUpdater", "WeightUpdater", "update_latent",
    "ControllerConfig", "AnchorTo", "FreezeJoints", "optimize_command", "estimate_tip",
]
