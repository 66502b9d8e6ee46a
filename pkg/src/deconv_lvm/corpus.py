"""Seeded synthetic corpora.

``style_corpus`` mixes two writing styles that share function words but
draw content words from (mostly) separate pools and follow different
templates.  ``matching_corpus`` builds same-topic / different-topic pairs.
Both are written in the standard dataset formats (see :mod:`.text`).
"""

from __future__ import annotations

import itertools
from pathlib import Path
from typing import Sequence

from .autodiff import Rng

FUNCTION_WORDS = ["the", "a", "of", "to", "and", "in", "is", "that", "for", "with", "on", "as", "by", "it", "was", "this"]

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"]
_VOWELS = ["a", "e", "i", "o", "u"]


def pseudo_words(n: int, rng: Rng) -> list[str]:
    """``n`` distinct two-syllable nonsense words."""
    syllables = [c + v for c, v in itertools.product(_ONSETS, _VOWELS)]
    words = sorted({a + b for a, b in itertools.product(syllables, syllables)} - set(FUNCTION_WORDS))
    picked = rng.choice(len(words), size=n, replace=False)
    return [words[i] for i in picked]


# C = content word, F = function word, other tokens are literal
_STYLE_TEMPLATES = {
    "formal": [
        "F C of F C C is C by F C .",
        "C C of C is C for F C C .",
        "F C C that C F C of C C .",
        "in F C , F C C is C with C .",
    ],
    "informal": [
        "C C ! it C C C ...",
        "so C , C C it C lol",
        "C C C ? C it C !",
        "omg C C so C , C !",
    ],
}


def style_corpus(
    n_per_style: int,
    seed: int = 0,
    vocab_size: int = 200,
    overlap: float = 0.2,
) -> list[tuple[str, str]]:
    """Sentences tagged ``formal`` or ``informal``, alternating.

    Content words come from a style-specific pool; with probability
    ``overlap`` a slot borrows from the other style's pool instead.
    ``vocab_size`` bounds the number of distinct word types.
    """
    rng = Rng(seed)
    literals = {tok for tpls in _STYLE_TEMPLATES.values() for t in tpls for tok in t.split() if tok not in ("C", "F")}
    n_content = max(2, vocab_size - len(FUNCTION_WORDS) - len(literals))
    words = pseudo_words(n_content, rng)
    pools = {"formal": words[: n_content // 2], "informal": words[n_content // 2 :]}
    other = {"formal": "informal", "informal": "formal"}
    out = []
    for i in range(2 * n_per_style):
        style = "formal" if i % 2 == 0 else "informal"
        templates = _STYLE_TEMPLATES[style]
        template = templates[int(rng.integers(0, len(templates)))]
        toks = []
        for slot in template.split():
            if slot == "C":
                pool = pools[other[style]] if rng.random() < overlap else pools[style]
                toks.append(pool[int(rng.integers(0, len(pool)))])
            elif slot == "F":
                toks.append(FUNCTION_WORDS[int(rng.integers(0, len(FUNCTION_WORDS)))])
            else:
                toks.append(slot)
        out.append((" ".join(toks), style))
    return out


def matching_corpus(
    n_pairs: int,
    seed: int = 0,
    n_topics: int = 6,
    topic_words: int = 6,
    shared_words: int = 40,
    topic_rate: float = 0.9,
    templates_per_topic: int = 2,
) -> list[tuple[str, str, str]]:
    """Sentence pairs labeled ``1`` (same topic) or ``0`` (different topics), balanced.

    Each topic owns ``templates_per_topic`` random slot templates and
    ``topic_words`` content words.  A content slot takes a word from the
    sentence's topic with probability ``topic_rate`` and from a pool shared
    by all topics otherwise; function-word slots draw from a common list.
    Lowering ``topic_rate`` makes pairs harder to tell apart.
    """
    rng = Rng(seed)
    words = pseudo_words(n_topics * topic_words + shared_words, rng)
    topics = [words[i * topic_words : (i + 1) * topic_words] for i in range(n_topics)]
    shared = words[n_topics * topic_words :]
    function = FUNCTION_WORDS[:8]

    def draw(pool: list[str]) -> str:
        return pool[int(rng.integers(0, len(pool)))]

    def template() -> list[str]:
        n = int(rng.integers(5, 10))
        return ["F" if rng.random() < 0.3 else "C" for _ in range(n)] + [draw([".", "!", "?"])]

    templates = [[template() for _ in range(templates_per_topic)] for _ in range(n_topics)]

    def sentence(topic: int) -> str:
        slots = templates[topic][int(rng.integers(0, templates_per_topic))]
        toks = []
        for slot in slots:
            if slot == "C":
                toks.append(draw(topics[topic]) if rng.random() < topic_rate else draw(shared))
            elif slot == "F":
                toks.append(draw(function))
            else:
                toks.append(slot)
        return " ".join(toks)

    rows = []
    for i in range(n_pairs):
        a = int(rng.integers(0, n_topics))
        if i % 2 == 0:
            b, label = a, "1"
        else:
            b, label = (a + int(rng.integers(1, n_topics))) % n_topics, "0"
        rows.append((sentence(a), sentence(b), label))
    return rows


def write_sentences(path, rows: Sequence[tuple[str, str]]) -> None:
    Path(path).write_text("".join(f"{s}\t{tag}\n" for s, tag in rows), encoding="utf-8")


def write_pairs(path, rows: Sequence[tuple[str, str, str]]) -> None:
    Path(path).write_text("".join(f"{a}\t{b}\t{y}\n" for a, b, y in rows), encoding="utf-8")
