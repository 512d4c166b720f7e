"""Pipeline configuration: a YAML file whose values flags and env override."""

from __future__ import annotations

from pathlib import Path

import yaml

from .errors import InputError

# Keys the config file may carry; anything else is rejected to catch typos.
KNOWN_KEYS = {
    "ontology",
    "corpus",
    "refined",
    "graph_export",
    "index_snapshot",
    "endpoint_url",
    "model_name",
    "max_retries",
    "workers",
    "llm_url",
    "llm_model",
    "embed_url",
    "fallback_embedder",
    "bind_addr",
    "k_entities",
    "k_relations",
    "min_score",
    "max_context_chars",
    "dim",
    "fixtures",
    "session_dir",
    "sparql_endpoint",
    "mode",
}


def load_config(path: str | Path | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise InputError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise InputError(f"{p}: bad config file: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{p}: config must be a mapping")
    unknown = set(data) - KNOWN_KEYS
    if unknown:
        raise InputError(f"{p}: unknown config key: {sorted(unknown)[0]!r}")
    return data


def resolve(flag_value, config: dict, key: str, default=None):
    """Flags (and env, which click folds into the flag) beat config beat default."""
    if flag_value is not None:
        return flag_value
    if key in config and config[key] is not None:
        return config[key]
    return default
