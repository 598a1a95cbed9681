from protosed.services.dataset import dataset_service
from protosed.services.detector import detector_service
from protosed.services.evaluator import evaluator_service
from protosed.services.features import feature_service
from protosed.services.trainer import trainer_service

__all__ = [
    "dataset_service",
    "detector_service",
    "evaluator_service",
    "feature_service",
    "trainer_service",
]
