from histories_lab.demos.anomalies import (
    DEMOS,
    CompositionAnomalyDemo,
    LinearPositivityAnomalyDemo,
    PerturbationAnomalyDemo,
)
from histories_lab.demos.base import Demo, DemoReport

__all__ = [
    "DEMOS",
    "CompositionAnomalyDemo",
    "Demo",
    "DemoReport",
    "LinearPositivityAnomalyDemo",
    "PerturbationAnomalyDemo",
]
