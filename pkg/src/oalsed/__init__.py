"""Online active learning over feature-vector streams with cost-aware losses."""

from .data_model import (
    AdaptationPool,
    BootstrapCorpus,
    Environment,
    FeatureVector,
    LabelVector,
    Sample,
    Session,
    build_bootstrap,
    build_sessions,
    organize_environments,
)
from .engine import OracleAnnotator, run_al, run_oal, run_supervised
from .ingest import DriftConfig, generate_synthetic_stream, load_manifest, write_report
from .losses import LossConfig
from .metrics import auprc, dcf, error_rates, macro_auprc, pr_curve
from .network import ArchConfig, TrainConfig, init_classifier, predict, train
from .query import QueryBudget, energy_score, random_strategy, select_queries
from .report import RunReport, SessionTrace

__version__ = "0.1.0"
