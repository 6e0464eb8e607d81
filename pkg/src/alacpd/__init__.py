"""Online change-point detection with an ensemble of TAEnets that keeps only a few raw windows."""
from .data import TimeSeries, generate_synthetic, load_benchmark_json, load_series, standardize, windows
from .detector import DetectionReport, Detector, EnsembleConfig, run
from .metrics import AnnotationSet, MatchConfig, average_rank, covering, f1_score
from .taenet import TAEnet, TAEnetConfig

__version__ = "0.1.0"
