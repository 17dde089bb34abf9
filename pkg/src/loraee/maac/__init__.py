from loraee.maac.bundle import AgentBundle, attention_critic_forward, soft_target_update
from loraee.maac.checkpoint import load_bundles, save_bundles
from loraee.maac.trainer import LearningCurvePoint, TrainingResult, execute_policy, train

__all__ = [
    "AgentBundle",
    "LearningCurvePoint",
    "TrainingResult",
    "attention_critic_forward",
    "execute_policy",
    "load_bundles",
    "save_bundles",
    "soft_target_update",
    "train",
]
