"""Protocol-aware HTTP security monitor."""

from ._core import (  # noqa: F401
    CompileError,
    ConfigError,
    MalformedUrl,
    Monitor,
    ScenarioError,
    SpecError,
    automaton_summary,
    builtin_spec_names,
    builtin_spec_xml,
    canonical_xml,
    replay_builtin,
    replay_file,
    to_dot,
    validate_spec,
)

__all__ = [
    "CompileError",
    "ConfigError",
    "MalformedUrl",
    "Monitor",
    "ScenarioError",
    "SpecError",
    "automaton_summary",
    "builtin_spec_names",
    "builtin_spec_xml",
    "canonical_xml",
    "replay_builtin",
    "replay_file",
    "to_dot",
    "validate_spec",
]
