"""Offline sentence-embedding exporter for the document-graph pipeline."""

from .encoders import DEFAULT_ENCODER, EncoderLoadError, load_encoder
from .export import CorpusError, ExportJob, export, read_corpus, write_payload

__version__ = "0.1.0"

__all__ = ["CorpusError", "DEFAULT_ENCODER", "EncoderLoadError", "ExportJob",
           "export", "load_encoder", "read_corpus", "write_payload"]
