from typing import Dict, List, Sequence, Tuple

import numpy as np

from protosed.models.events import OperatingPoint

Curve = List[Tuple[float, float]]


class ROCAgent:
    """Agent for PSD-ROC construction and PSDS integration"""

    @classmethod
    def envelope(cls, points: Sequence[Tuple[float, float]]) -> Curve:
        """
        Upper envelope of (eFPR, TPR) points.

        For each distinct eFPR, the best TPR among points with eFPR' <= eFPR;
        (0, 0) is prepended when no point sits at eFPR 0.
        """
        if not points:
            return [(0.0, 0.0)]
        array = np.array(points, dtype=np.float64)
        efprs = np.unique(array[:, 0])
        best = np.array([array[array[:, 0] == e, 1].max() for e in efprs])
        curve = list(zip(efprs.tolist(), np.maximum.accumulate(best).tolist()))
        if curve[0][0] > 0:
            curve.insert(0, (0.0, 0.0))
        return curve

    @classmethod
    def effective_tpr(cls, point: OperatingPoint, alpha_st: float = 0.0) -> float:
        """Mean class TPR, less `alpha_st` times its spread across classes"""
        if not point.tpr:
            return 0.0
        tprs = np.array(list(point.tpr.values()), dtype=np.float64)
        return float(max(0.0, tprs.mean() - alpha_st * tprs.std()))

    @classmethod
    def psd_roc(cls, operating_points: Sequence[OperatingPoint], alpha_st: float = 0.0) -> Curve:
        return cls.envelope([(point.mean_efpr, cls.effective_tpr(point, alpha_st)) for point in operating_points])

    @classmethod
    def class_curves(cls, operating_points: Sequence[OperatingPoint]) -> Dict[str, Curve]:
        classes = sorted({name for point in operating_points for name in point.tpr})
        return {
            name: cls.envelope(
                [(point.efpr.get(name, 0.0), point.tpr[name]) for point in operating_points if name in point.tpr]
            )
            for name in classes
        }

    @classmethod
    def psds(cls, roc: Curve, e_max: float = 100.0) -> float:
        """
        Normalized area under the step-function curve up to `e_max`.

        Point i holds its TPR from its eFPR up to the next point (or e_max).
        """
        area = 0.0
        for i, (efpr, tpr) in enumerate(roc):
            if efpr >= e_max:
                break
            right = roc[i + 1][0] if i + 1 < len(roc) else e_max
            area += tpr * (min(right, e_max) - efpr)
        return float(np.clip(area / e_max, 0.0, 1.0))
