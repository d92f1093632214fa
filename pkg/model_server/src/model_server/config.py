"""Server configuration: validation, environment and flag resolution."""

from __future__ import annotations

import os
from dataclasses import dataclass

from .prompts import available_templates

MODES = ("uniform", "hf-model")

ENV_MODE = "DS_SERVER_MODE"
ENV_PORT = "DS_SERVER_PORT"

DEFAULT_MODE = "uniform"
DEFAULT_PORT = 8765
DEFAULT_HOST = "127.0.0.1"
DEFAULT_DEVICE = "cpu"


class ConfigError(ValueError):
    """Invalid server configuration; the CLI maps this to exit 64."""


@dataclass(frozen=True)
class ServerConfig:
    """Validated server settings.

    ``vocab_size`` applies to uniform mode, ``model_id`` and ``device``
    to hf-model mode. ``prompt_template`` names a shipped template; it
    only takes effect in hf-model mode but is validated in both so a
    typo never waits for a mode switch to surface.
    """

    mode: str = DEFAULT_MODE
    vocab_size: int | None = None
    model_id: str | None = None
    device: str = DEFAULT_DEVICE
    host: str = DEFAULT_HOST
    port: int = DEFAULT_PORT
    prompt_template: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(
                f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}"
            )
        if (
            isinstance(self.port, bool)
            or not isinstance(self.port, int)
            or not 1 <= self.port <= 65535
        ):
            raise ConfigError(f"port must be an integer in 1-65535, got {self.port!r}")
        if self.mode == "uniform":
            if self.vocab_size is None:
                raise ConfigError("uniform mode requires vocab_size")
            if (
                isinstance(self.vocab_size, bool)
                or not isinstance(self.vocab_size, int)
                or self.vocab_size < 2
            ):
                raise ConfigError(f"vocab_size must be >= 2, got {self.vocab_size!r}")
        else:
            if not self.model_id:
                raise ConfigError("hf-model mode requires a model identifier")
        if self.prompt_template is not None:
            known = available_templates()
            if self.prompt_template not in known:
                raise ConfigError(
                    f"unknown prompt template {self.prompt_template!r};"
                    f" available: {', '.join(known)}"
                )


def env_defaults(environ=None) -> dict:
    """Settings contributed by DS_SERVER_MODE / DS_SERVER_PORT, if set."""
    if environ is None:
        environ = os.environ
    out: dict = {}
    mode = environ.get(ENV_MODE)
    if mode:
        out["mode"] = mode
    port = environ.get(ENV_PORT)
    if port:
        try:
            out["port"] = int(port)
        except ValueError:
            raise ConfigError(f"{ENV_PORT} must be an integer, got {port!r}") from None
    return out


def resolve_config(
    mode: str | None = None,
    vocab_size: int | None = None,
    model_id: str | None = None,
    device: str | None = None,
    host: str | None = None,
    port: int | None = None,
    prompt_template: str | None = None,
    environ=None,
) -> ServerConfig:
    """Build a ServerConfig with precedence: explicit value, env, default."""
    env = env_defaults(environ)
    return ServerConfig(
        mode=mode if mode is not None else env.get("mode", DEFAULT_MODE),
        vocab_size=vocab_size,
        model_id=model_id,
        device=device if device is not None else DEFAULT_DEVICE,
        host=host if host is not None else DEFAULT_HOST,
        port=port if port is not None else env.get("port", DEFAULT_PORT),
        prompt_template=prompt_template,
    )
