"""Benchmark applications, metrics and the suite runner."""

from .metrics import MetricsReport, compute_metrics
from .paths import (APPLICATIONS, TOLERANCES, ToleranceSpec, Whiteboard, gen_filling_path,
                    gen_spraying_path, gen_wiping_path, gen_writing_path, generate_path,
                    trac_error_mapping)
from .runner import BenchmarkConfig, load_manifest, run_benchmark, run_suite

__all__ = ["APPLICATIONS", "BenchmarkConfig", "MetricsReport", "TOLERANCES", "ToleranceSpec",
           "Whiteboard", "compute_metrics", "gen_filling_path", "gen_spraying_path",
           "gen_wiping_path", "gen_writing_path", "generate_path", "load_manifest",
           "run_benchmark", "run_suite", "trac_error_mapping"]
