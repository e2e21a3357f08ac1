"""Translate a typed three-address IR with exceptions and contracts into Boogie."""

from .pipeline import PipelineConfig, PipelineResult, compile_text, run_pipeline
from .syntax import parse_program, render_program

__all__ = ["PipelineConfig", "PipelineResult", "compile_text", "run_pipeline",
           "parse_program", "render_program"]
__version__ = "0.1.0"
