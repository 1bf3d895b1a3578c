"""Legal advisory engine: rule language, inference engine, consultations.

The package loads a knowledge base of production rules encoding university
regulations, runs interactive yes/no consultations and returns decisions
with causes, law-article citations and a fired-rule explanation trace.
"""

from .arl import KBAst, ParseError, Symbol, merge_kbs, parse_kb, render, tokenize
from .engine import Engine, EngineError, Quiescent, Suspended, eval_expr
from .knowledge import (
    Catalogue,
    Frame,
    build_network,
    check_consistency,
    kb_stats,
    resolve_law_link,
)
from .validation import ValidationReport, validate_ast

__version__ = "0.1.0"

__all__ = [
    "KBAst",
    "ParseError",
    "Symbol",
    "merge_kbs",
    "parse_kb",
    "render",
    "tokenize",
    "Engine",
    "EngineError",
    "Quiescent",
    "Suspended",
    "eval_expr",
    "Catalogue",
    "Frame",
    "build_network",
    "check_consistency",
    "kb_stats",
    "resolve_law_link",
    "ValidationReport",
    "validate_ast",
    "__version__",
]
