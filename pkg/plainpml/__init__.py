__all__ = [
    "cli",
    "consts",
    "dataset",
    "experiment",
    "graph",
    "io",
    "metrics",
    "network",
    "propagation",
    "trainer",
    "load_dataset",
    "save_dataset",
    "synthesize_pml",
    "run_cv",
    "train",
]
__version__ = "0.1.0"
__author__ = "Akio Taniguchi"


# submodules
from . import consts
from . import dataset
from . import graph
from . import propagation
from . import network
from . import metrics
from . import trainer
from . import experiment
from . import io
from . import cli
from .dataset import load_dataset, save_dataset, synthesize_pml
from .experiment import run_cv
from .trainer import train
