"""Access to the packaged languages, mode files and rule sets."""

from __future__ import annotations

from importlib import resources

from .logic import Language, parse_mode_declarations, parse_rules

ENV_DATA = {"getout", "getout_plus", "threefishes", "loot"}


def data_path(env_name: str, filename: str):
    if env_name not in ENV_DATA:
        raise ValueError(f"no packaged data for {env_name!r}")
    return resources.files("rulerl") / "data" / env_name / filename


def load_language(env_name: str) -> Language:
    text = data_path(env_name, "language.yaml").read_text(encoding="utf-8")
    import yaml

    return Language.from_dict(yaml.safe_load(text))


def load_rules(env_name: str, filename: str, language: Language | None = None):
    language = language or load_language(env_name)
    text = data_path(env_name, filename).read_text(encoding="utf-8")
    return parse_rules(text, language)


def load_modes(env_name: str, language: Language | None = None):
    language = language or load_language(env_name)
    text = data_path(env_name, "modes.txt").read_text(encoding="utf-8")
    return parse_mode_declarations(text, language)
