"""Optimizers and the learning-rate schedule."""

from .adam import AdamState, NonFiniteGradient, adam_step
from .jacobi import jacobi_eigh
from .schedule import LrSchedule, lr_at
from .soap import SoapState, soap_step

OPTIMIZERS = ("adam", "soap")

__all__ = [
    "AdamState",
    "LrSchedule",
    "NonFiniteGradient",
    "OPTIMIZERS",
    "SoapState",
    "adam_step",
    "jacobi_eigh",
    "lr_at",
    "soap_step",
]
