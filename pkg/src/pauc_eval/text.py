"""Deterministic text normalization used by judges, merging, and duplicate detection."""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")

# Small closed-class list; enough to strip function words from short QA answers.
STOPWORDS = frozenset(
    """
    a an the and or but nor so if then than as of in on at to for with by from
    into onto over under about after before during between through
    is are was were be been being am do does did done has have had having
    it its this that these those there here he she they them him her his their
    i you we us our your my me not no yes can could will would shall should
    may might must very too also just only such both each any some all
    what when where which who whom whose why how
    """.split()
)


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split into word tokens."""
    return _TOKEN_RE.findall(text.lower())


def content_tokens(text: str) -> list[str]:
    """Tokens that remain after stopword removal.

    Falls back to the raw token list when every token is a stopword, so that
    degenerate texts still compare non-vacuously.
    """
    tokens = tokenize(text)
    kept = [t for t in tokens if t not in STOPWORDS]
    return kept if kept else tokens


def normalized(text: str) -> str:
    """Canonical form used for exact-duplicate comparison."""
    return " ".join(tokenize(text))


def overlap_coefficient(a: str, b: str) -> float:
    """Set overlap |A∩B| / min(|A|, |B|) over content tokens.

    Returns 1.0 when both texts normalize to nothing, 0.0 when only one does.
    """
    set_a = set(content_tokens(a))
    set_b = set(content_tokens(b))
    if not set_a and not set_b:
        return 1.0
    if not set_a or not set_b:
        return 0.0
    return len(set_a & set_b) / min(len(set_a), len(set_b))


def token_recall(gold: str, candidate: str) -> float:
    """Fraction of gold content tokens present in the candidate text.

    Vacuously 1.0 when the gold text yields no tokens at all.
    """
    gold_set = set(content_tokens(gold))
    if not gold_set:
        return 1.0
    cand_set = set(tokenize(candidate))
    return len(gold_set & cand_set) / len(gold_set)
