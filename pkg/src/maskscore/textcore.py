"""Tokenization, vocabulary management, and the canonical sequence type.

Texts are whitespace-tokenized into integer id sequences under a closed
:class:`Vocabulary` with one reserved mask id. Remote backends carry their
own tokenization behind the wire protocol; everything in-process speaks
this representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    DegenerateVocabulary,
    EmptyCorpus,
    OutOfVocabulary,
    UnknownId,
)

MASK_TOKEN = "[M]"

_RULES = ("whitespace", "whitespace_lower")


def _split(text: str, rule: str) -> list[str]:
    if rule == "whitespace_lower":
        text = text.lower()
    return text.split()


@dataclass(frozen=True)
class Vocabulary:
    """Closed token set with a reserved mask id.

    ``ids`` maps each real token to 0..size-1 in first-appearance order;
    ``mask_id == size`` is one past the last real id and never appears in
    ``tokens``. ``size`` counts real tokens only.
    """

    tokens: tuple[str, ...]
    ids: dict[str, int] = field(compare=False, repr=False)
    mask_id: int
    size: int
    tokenizer_rule: str = "whitespace"

    def __post_init__(self) -> None:
        if self.size != len(self.tokens) or self.mask_id != self.size:
            raise DegenerateVocabulary(
                f"inconsistent vocabulary: size={self.size} tokens={len(self.tokens)}"
                f" mask_id={self.mask_id}"
            )
        if self.tokenizer_rule not in _RULES:
            raise ValueError(f"unknown tokenizer rule: {self.tokenizer_rule!r}")
        if MASK_TOKEN in self.ids:
            raise DegenerateVocabulary(f"{MASK_TOKEN} cannot be a real token")
        if len(self.ids) != len(self.tokens) or any(
            self.ids[tok] != i for i, tok in enumerate(self.tokens)
        ):
            raise DegenerateVocabulary("ids must map tokens to 0..size-1 in order")

    def id_of(self, token: str) -> int:
        try:
            return self.ids[token]
        except KeyError:
            raise OutOfVocabulary(token) from None

    def token_of(self, token_id: int) -> str:
        if token_id == self.mask_id:
            return MASK_TOKEN
        if 0 <= token_id < self.size:
            return self.tokens[token_id]
        raise UnknownId(token_id)


def _make_vocabulary(tokens: list[str], rule: str) -> Vocabulary:
    ids = {tok: i for i, tok in enumerate(tokens)}
    return Vocabulary(
        tokens=tuple(tokens),
        ids=ids,
        mask_id=len(tokens),
        size=len(tokens),
        tokenizer_rule=rule,
    )


@dataclass(frozen=True)
class TokenSequence:
    """Integer-token view of one text under a vocabulary.

    Clean sequences contain no mask id; corrupted ones may. The vocabulary
    travels with the sequence so downstream code can check for mismatches.
    """

    ids: tuple[int, ...]
    vocab: Vocabulary = field(compare=False, repr=False)

    def __post_init__(self) -> None:
        mask_id = self.vocab.mask_id
        for token_id in self.ids:
            if not 0 <= token_id <= mask_id:
                raise UnknownId(token_id)

    @property
    def length(self) -> int:
        return len(self.ids)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def is_clean(self) -> bool:
        return self.vocab.mask_id not in self.ids


def build_vocabulary(corpus: list[str], tokenizer_rule: str = "whitespace") -> Vocabulary:
    """Collect distinct tokens from ``corpus`` in first-appearance order.

    Raises EmptyCorpus when no text is given and DegenerateVocabulary when
    fewer than 2 distinct tokens remain after rule application.
    """
    if tokenizer_rule not in _RULES:
        raise ValueError(f"unknown tokenizer rule: {tokenizer_rule!r}")
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    seen: dict[str, None] = {}
    for text in corpus:
        for token in _split(text, tokenizer_rule):
            seen.setdefault(token, None)
    if len(seen) < 2:
        raise DegenerateVocabulary(
            f"need at least 2 distinct tokens, got {len(seen)}"
        )
    return _make_vocabulary(list(seen), tokenizer_rule)


def tokenize(text: str, vocab: Vocabulary, oov_policy: str = "error") -> TokenSequence:
    """Map rule-split tokens of ``text`` to ids under ``vocab``.

    ``oov_policy="skip"`` silently drops out-of-vocabulary tokens;
    ``"error"`` raises OutOfVocabulary on the first one.
    """
    if oov_policy not in ("error", "skip"):
        raise ValueError(f"unknown oov policy: {oov_policy!r}")
    ids: list[int] = []
    for token in _split(text, vocab.tokenizer_rule):
        found = vocab.ids.get(token)
        if found is None:
            if oov_policy == "error":
                raise OutOfVocabulary(token)
            continue
        ids.append(found)
    return TokenSequence(ids=tuple(ids), vocab=vocab)


def detokenize(seq: TokenSequence, vocab: Vocabulary | None = None) -> str:
    """Space-join token strings; the mask id renders as "[M]"."""
    vocab = vocab if vocab is not None else seq.vocab
    return " ".join(vocab.token_of(token_id) for token_id in seq.ids)
