"""Arrowhead LP data model, validation, serialization, generation and merging."""

from .generate import GeneratedInstance, GeneratorError, GeneratorParams, generate, generate_instance
from .io import ParseError, dumps, loads, read_file, write_file
from .links import GLOBAL, LinkClassification, classify_links
from .merge import block_groups, merge_blocks
from .model import ArrowheadProblem, Block, Linking, SparseBlock, Violation, validate
from .standard import IllPosedError, StandardArrowhead, to_standard_form

__all__ = [
    "ArrowheadProblem", "Block", "GLOBAL", "GeneratedInstance", "GeneratorError", "GeneratorParams",
    "IllPosedError", "LinkClassification", "Linking", "ParseError", "SparseBlock", "StandardArrowhead",
    "Violation", "block_groups", "classify_links", "dumps", "generate", "generate_instance", "loads",
    "merge_blocks", "read_file", "to_standard_form", "validate", "write_file",
]
