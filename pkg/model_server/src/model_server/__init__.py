"""Reference server for the masked-denoiser wire protocol.

Two modes share one HTTP surface: ``uniform`` answers every target with
-log(vocab_size) and needs nothing beyond the standard library, which
makes protocol conformance testable without any ML dependencies;
``hf-model`` wraps a local masked-LM checkpoint behind the same
endpoints. Handlers are stateless, so responses never depend on request
arrival order.
"""

from .config import ConfigError, ServerConfig, resolve_config
from .prompts import available_templates, load_prompt_template
from .server import (
    MASK_TOKEN,
    MAX_BODY_BYTES,
    DenoiserServer,
    UniformBackend,
    create_server,
    serve,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DenoiserServer",
    "MASK_TOKEN",
    "MAX_BODY_BYTES",
    "ServerConfig",
    "UniformBackend",
    "available_templates",
    "create_server",
    "load_prompt_template",
    "resolve_config",
    "serve",
    "__version__",
]
