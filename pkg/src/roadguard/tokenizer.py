"""Byte-pair tokenizer over rank files, used for token-cost accounting.

A vocabulary is a mapping from byte sequences to integer ranks, loaded
from a rank file with one ``base64(token) rank`` pair per line. Encoding
starts from single bytes and repeatedly merges the adjacent pair whose
concatenation has the lowest rank; decoding concatenates token bytes back
into the original text.

An optional pre-tokenization split pattern keeps merges from crossing
word boundaries; ``load_cl100k_base`` installs the standard split pattern
and special-token ids for that vocabulary (the rank file itself is not
bundled — point the loader at your copy).
"""

from __future__ import annotations

import base64
import binascii
from typing import Optional


class VocabLoadError(Exception):
    """The vocabulary file (or table) cannot be used."""


#: Split pattern used by the cl100k_base vocabulary. Needs the `regex`
#: module (\p classes, possessive quantifiers).
CL100K_SPLIT_PATTERN = (
    r"""'(?i:[sdmt]|ll|ve|re)|[^\r\n\p{L}\p{N}]?+\p{L}+|\p{N}{1,3}"""
    r"""| ?[^\s\p{L}\p{N}]++[\r\n]*|\s*[\r\n]|\s+(?!\S)|\s+"""
)

CL100K_SPECIAL_TOKENS = {
    "<|endoftext|>": 100257,
    "<|fim_prefix|>": 100258,
    "<|fim_middle|>": 100259,
    "<|fim_suffix|>": 100260,
    "<|endofprompt|>": 100276,
}

#: Documented bound on how concatenation can change a token count:
#: count(a + b) <= count(a) + count(b) + BOUNDARY_ADJUSTMENT.
BOUNDARY_ADJUSTMENT = 1


class BpeTokenizer:
    """Immutable byte-pair encoder over a rank table."""

    def __init__(
        self,
        ranks: dict[bytes, int],
        special_tokens: Optional[dict[str, int]] = None,
        split_pattern: Optional[str] = None,
    ):
        if not ranks:
            raise VocabLoadError("empty vocabulary")
        if len(set(ranks.values())) != len(ranks):
            raise VocabLoadError("ranks are not unique")
        self._ranks = dict(ranks)
        self._special = dict(special_tokens or {})
        self._decoder: dict[int, bytes] = {rank: token for token, rank in self._ranks.items()}
        for text, rank in self._special.items():
            if rank in self._decoder:
                raise VocabLoadError(f"special token id {rank} collides with the vocabulary")
            self._decoder[rank] = text.encode("utf-8")
        if split_pattern is not None:
            import regex

            self._splitter = regex.compile(split_pattern)
        else:
            self._splitter = None

    def __len__(self) -> int:
        return len(self._ranks)

    @classmethod
    def from_rank_file(
        cls,
        path,
        special_tokens: Optional[dict[str, int]] = None,
        split_pattern: Optional[str] = None,
    ) -> "BpeTokenizer":
        """Load a ``base64(token) rank`` file (one pair per line)."""
        ranks: dict[bytes, int] = {}
        try:
            with open(path, "rb") as handle:
                for lineno, raw in enumerate(handle, start=1):
                    line = raw.strip()
                    if not line:
                        continue
                    parts = line.split()
                    if len(parts) != 2:
                        raise VocabLoadError(f"{path}:{lineno}: expected 'base64 rank'")
                    try:
                        token = base64.b64decode(parts[0], validate=True)
                        rank = int(parts[1])
                    except (binascii.Error, ValueError) as exc:
                        raise VocabLoadError(f"{path}:{lineno}: {exc}") from exc
                    if token in ranks:
                        raise VocabLoadError(f"{path}:{lineno}: duplicate token")
                    ranks[token] = rank
        except OSError as exc:
            raise VocabLoadError(f"cannot read vocabulary {path}: {exc}") from exc
        return cls(ranks, special_tokens=special_tokens, split_pattern=split_pattern)

    def _encode_piece(self, piece: bytes) -> list[int]:
        if piece in self._ranks:
            return [self._ranks[piece]]
        parts = [piece[i:i + 1] for i in range(len(piece))]
        for part in parts:
            if part not in self._ranks:
                raise ValueError(f"byte {part!r} not in vocabulary; text is not encodable")
        while len(parts) > 1:
            best_rank = None
            best_index = None
            for i in range(len(parts) - 1):
                rank = self._ranks.get(parts[i] + parts[i + 1])
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_index = i
            if best_index is None:
                break
            parts[best_index:best_index + 2] = [parts[best_index] + parts[best_index + 1]]
        return [self._ranks[part] for part in parts]

    def encode(self, text: str) -> list[int]:
        """Greedy lowest-rank-merge encoding of ``text``.

        Special-token strings in the input are treated as ordinary text.
        """
        if not text:
            return []
        if self._splitter is None:
            return self._encode_piece(text.encode("utf-8"))
        ids: list[int] = []
        for piece in self._splitter.findall(text):
            ids.extend(self._encode_piece(piece.encode("utf-8")))
        return ids

    def decode(self, ids) -> str:
        try:
            data = b"".join(self._decoder[i] for i in ids)
        except KeyError as exc:
            raise ValueError(f"unknown token id {exc.args[0]}") from exc
        return data.decode("utf-8")

    def count(self, text: str) -> int:
        return len(self.encode(text))


def count_tokens(tokenizer: BpeTokenizer, text: str) -> int:
    """Length of the tokenizer's encoding of ``text``."""
    return tokenizer.count(text)


def load_cl100k_base(path) -> BpeTokenizer:
    """Load a cl100k_base rank file with its split pattern and specials."""
    return BpeTokenizer.from_rank_file(
        path,
        special_tokens=CL100K_SPECIAL_TOKENS,
        split_pattern=CL100K_SPLIT_PATTERN,
    )


def toy_tokenizer() -> BpeTokenizer:
    """The small bundled vocabulary (all 256 bytes + a few merges)."""
    from importlib import resources

    with resources.as_file(resources.files("roadguard.data").joinpath("toy_vocab.bpe")) as path:
        return BpeTokenizer.from_rank_file(path)
