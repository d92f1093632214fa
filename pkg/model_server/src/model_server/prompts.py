"""Prompt template registry.

Templates ship as data files and are selected by name. The chosen
template is prepended to the request context in hf-model mode; the wire
protocol itself never carries it, so clients stay template-agnostic.
"""

from __future__ import annotations

from importlib import resources


def _prompt_dir():
    return resources.files("model_server") / "data" / "prompts"


def available_templates() -> tuple[str, ...]:
    """Names of the shipped templates, sorted."""
    names = [
        entry.name[: -len(".txt")]
        for entry in _prompt_dir().iterdir()
        if entry.name.endswith(".txt")
    ]
    return tuple(sorted(names))


def load_prompt_template(name: str) -> str:
    """Return the template text for ``name`` (stripped, single line)."""
    path = _prompt_dir() / f"{name}.txt"
    if not path.is_file():
        raise KeyError(f"unknown prompt template {name!r}")
    return path.read_text(encoding="utf-8").strip()
