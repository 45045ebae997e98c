"""Extract version control histories into a unified model and run
dependency-ordered, parallel analyses over them."""

from .errors import RepomineError
from .extractors import ExtractorKind, ExtractorSpec, extract, extract_git, extract_model_file, item_content
from .model import (
    Action,
    ActionKind,
    Author,
    CommitRecord,
    Event,
    Item,
    RepositoryModel,
    SourceRef,
    ValidationReport,
    action_counts,
    assemble,
    natural_key,
    topo_order,
    validate,
)
from .persistence import load_model, save_model

__version__ = "0.1.0"
