from protosed.cache.feature_cache import FeatureCache

__all__ = ["FeatureCache"]
