"""Bilingual prompt templates stored as package data.

Each file ``templates/{task}/{lang}.txt`` holds a ``%%SYSTEM%%`` and a
``%%USER%%`` section. Placeholders such as ``{final_summary}`` are filled by
plain substitution because the templates also contain literal JSON braces.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

TASKS = ("profile", "player_id", "reflection", "trace", "role")
LANGS = ("zh", "en")

PLACEHOLDERS = {
    "profile": ("REFLECTION_SEGMENT", "ACCUMULATED_SUMMARY"),
    "player_id": ("final_summary", "new_game_prompt"),
    "reflection": ("final_summary", "new_game_prompt", "masked_msg"),
    "trace": ("final_summary", "data_conc", "new_game_prompt"),
    "role": ("data_conc", "new_game_prompt"),
}

# Strings that identify each task's prompt; used by the mock backends.
MARKERS = {
    "role": "=== Roles ===",
    "trace": "=== Replacements ===",
    "reflection": "[My Review]",
    "player_id": '"top1"',
}
PROFILE_MARKERS = ("以下是我旁观某位玩家时记录的一局游戏数据", "Below is a reflection record I made while observing")

NONE_TEXT = {"zh": "（无）", "en": "(none)"}


@dataclass(frozen=True)
class PromptTemplate:
    task: str
    lang: str
    system: str
    user: str

    def fill(self, **slots: str) -> tuple[str, str]:
        expected = PLACEHOLDERS[self.task]
        missing = [k for k in expected if k not in slots]
        if missing:
            raise KeyError(f"missing placeholder values {missing} for {self.task}")
        return fill(self.system, **slots), fill(self.user, **slots)


def fill(text: str, **slots: str) -> str:
    for name, value in slots.items():
        text = text.replace("{" + name + "}", value)
    return text


def _read(task: str, lang: str) -> str:
    return resources.files("inmind").joinpath(f"templates/{task}/{lang}.txt").read_text("utf-8")


@lru_cache(maxsize=None)
def load_template(task: str, lang: str = "zh") -> PromptTemplate:
    if task not in TASKS:
        raise KeyError(f"unknown task {task!r}")
    if lang not in LANGS:
        raise KeyError(f"unknown language {lang!r}")
    raw = _read(task, lang)
    head, _, rest = raw.partition("%%SYSTEM%%\n")
    system, _, user = rest.partition("%%USER%%\n")
    if head.strip() or not system or not user:
        raise ValueError(f"template {task}/{lang} is missing a section")
    return PromptTemplate(task, lang, system.rstrip("\n"), user.rstrip("\n"))


def templates_digest() -> str:
    h = hashlib.sha256()
    for task in TASKS:
        for lang in LANGS:
            h.update(f"{task}/{lang}\n".encode())
            h.update(_read(task, lang).encode("utf-8"))
    return h.hexdigest()
