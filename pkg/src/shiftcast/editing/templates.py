"""Prompt templates for edit generation and critique, with placeholder rendering.

Templates live as plain-text files next to this module, one per edit kind.
Placeholders are angle-bracketed, e.g. ``<target color>``. A few placeholders
do not stand for text at all: they mark where an image is attached by the
transport layer (``<image>``, ``<original image>``, ``<Image 0>`` ...). Those
survive rendering untouched; everything else must be substituted.
"""

from __future__ import annotations

import re
from importlib import resources
from typing import Mapping

TEMPLATE_NAMES = (
    "person",
    "large_distractor",
    "small_distractor",
    "background",
    "lighting_overhead",
    "lighting_wrist",
    "table_height",
)

CRITIC_TEMPLATE = "critic"

# Slots filled by attaching an image to the request, not by text substitution.
ATTACHMENT_SLOTS = frozenset(
    {"image", "original image", "Image 0", "Image 1", "Image 2", "Image 3"}
)

# Condensed per-template instructions handed to the critic; substituted with
# the same values as the full prompt. Overly detailed instructions make the
# critic reject acceptable edits, so these stay short.
SHORT_INSTRUCTIONS: Mapping[str, str] = {
    "person": "Add a person behind the blue platform",
    "large_distractor": "Add a large <target color> <target object> at the edge of the pink mat",
    "small_distractor": "Add a small scented candle on the pink mat",
    "background": "Change the color of the pink mat to <target color>",
    "lighting_overhead": "Colorize the bottom half of the image with an extremely intense <target color> hue",
    "lighting_wrist": "Colorize the entire image with an extremely intense <target color> color tone",
    "table_height": "Change the color of the pink mat to <target color>",
}

_PLACEHOLDER = re.compile(r"<([^<>\n]+)>")


class TemplateError(ValueError):
    """Unknown template name or unsubstituted placeholder."""


def load_template(name: str) -> str:
    """Raw text of a named template (final newline stripped)."""
    if name not in TEMPLATE_NAMES and name != CRITIC_TEMPLATE:
        raise TemplateError(f"unknown template {name!r}; known: {sorted((*TEMPLATE_NAMES, CRITIC_TEMPLATE))}")
    data = resources.files(__package__).joinpath(f"prompt_templates/{name}.txt")
    return data.read_text(encoding="utf-8").rstrip("\n")


def placeholders(text: str) -> set[str]:
    """Names of substitutable placeholders in ``text`` (attachment slots excluded)."""
    return {m.group(1) for m in _PLACEHOLDER.finditer(text)} - ATTACHMENT_SLOTS


def substitute(text: str, substitutions: Mapping[str, str]) -> str:
    """Replace every ``<key>`` for the given keys; error if any placeholder is left.

    Idempotent on its own output: a second pass with the same substitutions
    finds nothing to do. Unused substitution keys are ignored.
    """
    out = text
    for key, value in substitutions.items():
        out = out.replace(f"<{key}>", value)
    remaining = placeholders(out)
    if remaining:
        raise TemplateError(f"missing substitutions for placeholders: {sorted(remaining)}")
    return out


def render_prompt(template_name: str, substitutions: Mapping[str, str]) -> str:
    """Load a template and substitute all of its placeholders."""
    return substitute(load_template(template_name), substitutions)


def short_instruction(template_name: str, substitutions: Mapping[str, str]) -> str:
    """The critic-facing condensed instruction for a template, substituted."""
    if template_name not in SHORT_INSTRUCTIONS:
        raise TemplateError(f"no short instruction for template {template_name!r}")
    return substitute(SHORT_INSTRUCTIONS[template_name], substitutions)
