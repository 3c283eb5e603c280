"""Device-free people counting from RSSI fluctuations on wireless links."""

from .detect import (
    DetectionEvent,
    DetectorConfig,
    detect_probability,
    detect_std,
    fluctuations,
    fuse_receivers,
    prob_in_band,
    segment_events,
    window_stats,
    window_sweep,
)
from .features import EventFeatureVector, extract, group_means
from .kernels import BACKEND
from .lda import LdaModel, classify, fit, load_model, save_model, score
from .pipeline import CountReport, evaluate, run_count, run_zone
from .synth import CrossingEvent, SynthConfig, generate
from .trace import PacketSample, Trace, read_trace, write_trace

__version__ = "0.1.0"
