from protosed.agents.episode_sampler import EpisodeSamplerAgent
from protosed.agents.event_matcher import EventMatcherAgent, MatchResult
from protosed.agents.post_filter import PostFilterAgent
from protosed.agents.prototypes import PrototypeAgent
from protosed.agents.roc import ROCAgent

__all__ = [
    "EpisodeSamplerAgent",
    "EventMatcherAgent",
    "MatchResult",
    "PostFilterAgent",
    "PrototypeAgent",
    "ROCAgent",
]
