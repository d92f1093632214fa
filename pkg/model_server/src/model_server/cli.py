"""Command line for the reference server."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import (
    DEFAULT_HOST,
    DEFAULT_MODE,
    DEFAULT_PORT,
    ENV_MODE,
    ENV_PORT,
    MODES,
    ConfigError,
    resolve_config,
)
from .prompts import available_templates
from .server import serve

EXIT_OK = 0
EXIT_USAGE = 64
EXIT_UNAVAILABLE = 69
EXIT_INTERNAL = 70


class UsageError(Exception):
    """Bad flags; maps to exit 64."""


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so main() owns codes."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="model-server",
        description=(
            "Serve GET /v1/health and POST /v1/logprobs for masked-denoiser"
            " clients. Uniform mode answers -log(vocab_size) per target and"
            " has no ML dependencies; hf-model mode wraps a masked-LM"
            " checkpoint."
        ),
    )
    p.add_argument(
        "--mode",
        choices=MODES,
        default=None,
        help=f"serving mode (env {ENV_MODE}; default {DEFAULT_MODE})",
    )
    p.add_argument(
        "--vocab-size",
        type=int,
        default=None,
        help="vocabulary size for uniform mode (>= 2)",
    )
    p.add_argument(
        "--model",
        default=None,
        help="checkpoint identifier or local path for hf-model mode",
    )
    p.add_argument("--device", default=None, help="hf-model device (default cpu)")
    p.add_argument("--host", default=None, help=f"bind address (default {DEFAULT_HOST})")
    p.add_argument(
        "--port",
        type=int,
        default=None,
        help=f"bind port 1-65535 (env {ENV_PORT}; default {DEFAULT_PORT})",
    )
    p.add_argument(
        "--prompt-template",
        default=None,
        help="shipped template name, prepended to context in hf-model mode",
    )
    p.add_argument(
        "--list-templates",
        action="store_true",
        help="print available prompt template names and exit",
    )
    p.add_argument("--verbose", action="store_true", help="log every request")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.list_templates:
            for name in available_templates():
                print(name)
            return EXIT_OK
        config = resolve_config(
            mode=args.mode,
            vocab_size=args.vocab_size,
            model_id=args.model,
            device=args.device,
            host=args.host,
            port=args.port,
            prompt_template=args.prompt_template,
        )
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        serve(config)
    except KeyboardInterrupt:
        return EXIT_OK
    except OSError as exc:  # bind failure: port busy, bad address
        print(f"error: cannot serve on {config.host}:{config.port}: {exc}", file=sys.stderr)
        return EXIT_UNAVAILABLE
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
