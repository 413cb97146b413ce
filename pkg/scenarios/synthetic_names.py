# scenarios/synthetic_names.py

import random
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from scenarios.entity_check import EntityChecker

# Syllable inventories per style: (onsets, middles, codas). A word is
# onset + 0..1 middles + coda, capitalised.
_SYLLABLES: Dict[str, tuple] = {
    "dnd_human": (["Bal", "Ser", "Ol", "Thar", "Ael", "Dor", "Kael", "Bren", "Mor", "Gal"],
                  ["o", "a", "en", "ri", "ok", "ae"],
                  ["wind", "hair", "vrome", "dric", "mir", "spirit", "wyn", "las", "ric", "thas"]),
    "russian": (["Vlad", "Bor", "Mik", "Dmit", "Svet", "Yar", "Zhen", "Pav", "Gor", "Lyud"],
                ["o", "i", "ya", "el", "ov"],
                ["islav", "ovich", "enko", "ana", "ikov", "etsky", "ov", "in", "a", "ev"]),
    "french": (["Jean", "Mar", "Lou", "Fran", "Ber", "Gen", "Ros", "Cler", "Del", "Mau"],
               ["e", "i", "au", "el", "on"],
               ["ceau", "ier", "ette", "ard", "ine", "eaux", "ois", "elle", "ot", "ac"]),
    "german": (["Wolf", "Hein", "Gunt", "Lud", "Frie", "Kal", "Brun", "Ott", "Sieg", "Diet"],
               ["e", "er", "i", "en", "el"],
               ["mann", "rich", "hard", "berg", "wald", "stein", "bert", "helm", "fried", "ke"]),
    "korean": (["Kim", "Park", "Seo", "Jung", "Han", "Yoon", "Kang", "Choi", "Lim", "Baek"],
               ["a", "o", "eo", "u"],
               ["jun", "min", "woo", "hyun", "seok", "yeon", "ho", "bin", "jin", "soo"]),
    "japanese": (["Hira", "Tak", "Yosh", "Kaz", "Mats", "Nak", "Sato", "Fuji", "Hide", "Kuro"],
                 ["a", "i", "u", "o", "shi"],
                 ["shima", "yoshi", "hiro", "moto", "kawa", "ko", "ta", "ru", "no", "mura"]),
    "work": (["Vel", "Sona", "Myr", "Cal", "Ost", "Ner", "Quil", "Tam", "Lor", "Zeph"],
             ["a", "o", "e", "ir", "an"],
             ["mora", "ith", "ade", "ova", "ique", "ara", "ion", "ette", "ium", "os"]),
    "organisation": (["Kol", "Stra", "Nord", "Vex", "Arc", "Lum", "Hal", "Tess", "Brix", "Cor"],
                     ["a", "i", "o", "en"],
                     ["tek", "ion", "ex", "ova", "ium", "ant", "is", "ar", "on", "ya"]),
    "city": (["San", "Port", "Vel", "Kar", "Alt", "Mir", "Tor", "Bel", "Ost", "Cas"],
             ["a", "e", "o", "ri", "an"],
             ["cos", "via", "grad", "heim", "ora", "polis", "mont", "burg", "ena", "dor"]),
}

# Person names get a given name and a family name; other styles get one or two words.
_PERSON_STYLES = {"dnd_human", "russian", "french", "german", "korean", "japanese"}
_ORG_SUFFIXES = ["Kollektiv", "Group", "Works", "Society", "Records"]

STYLES = tuple(_SYLLABLES)


class NameGenerationError(Exception):
    pass


@dataclass(frozen=True)
class SyntheticSubject:
    name: str
    style: str
    entity_collision_checked: bool = True


def make_word(rng: random.Random, style: str) -> str:
    onsets, middles, codas = _SYLLABLES[style]
    parts = [rng.choice(onsets)] + [rng.choice(middles) for _ in range(rng.randint(0, 1))] + [rng.choice(codas)]
    return "".join(parts).capitalize()


def make_name(rng: random.Random, style: str) -> str:
    if style not in _SYLLABLES:
        raise NameGenerationError(f"unknown name style '{style}'")
    if style in _PERSON_STYLES:
        return f"{make_word(rng, style)} {make_word(rng, style)}"
    if style == "organisation":
        return f"{make_word(rng, style)} {rng.choice(_ORG_SUFFIXES)}"
    return make_word(rng, style)


class NameGenerator:
    """Seeded syllable-template names, deduplicated and checked against known entities."""

    def __init__(self, seed: int, entity_checker: Optional[EntityChecker] = None, max_attempts: int = 50):
        self.rng = random.Random(seed)
        self.entity_checker = entity_checker
        self.max_attempts = max_attempts
        self.used: set = set()
        self.collisions = 0

    def name(self, style: str, single_word: bool = False) -> SyntheticSubject:
        for _ in range(self.max_attempts):
            candidate = make_word(self.rng, style) if single_word else make_name(self.rng, style)
            if candidate in self.used:
                self.collisions += 1
                continue
            if self.entity_checker is not None and self.entity_checker.exists(candidate):
                self.collisions += 1
                continue
            self.used.add(candidate)
            return SyntheticSubject(candidate, style, self.entity_checker is not None)
        raise NameGenerationError(f"no fresh '{style}' name after {self.max_attempts} attempts")


def generate_synthetic_subjects(styles: Sequence[str], n: int, entity_checker: Optional[EntityChecker],
                                seed: int = 0, max_attempts: int = 50) -> List[SyntheticSubject]:
    """n unique names cycling through the styles in order; same seed, same list."""
    if not styles:
        raise NameGenerationError("no name styles given")
    generator = NameGenerator(seed, entity_checker, max_attempts)
    return [generator.name(styles[i % len(styles)]) for i in range(n)]


def style_distribution(subjects: Sequence[SyntheticSubject]) -> Dict[str, int]:
    return dict(sorted(Counter(s.style for s in subjects).items()))
