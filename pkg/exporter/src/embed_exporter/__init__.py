from .exporter import ExportError, ExportJob, encode_tokens, run_export, write_store

__version__ = "0.1.0"
