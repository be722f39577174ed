"""Token/index vocabulary with reserved PAD/BOS/EOS/UNK entries."""

from collections import Counter
from typing import Iterable, List, Optional

from .errors import ContractError

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
RESERVED = (PAD, BOS, EOS, UNK)


class Vocabulary:
    """Bijective token<->index map; indices 0..3 are PAD, BOS, EOS, UNK."""

    def __init__(self, tokens: Optional[Iterable[str]] = None):
        self._tokens: List[str] = list(RESERVED)
        self._index = {t: i for i, t in enumerate(self._tokens)}
        for t in tokens or ():
            self.add(t)

    @classmethod
    def from_counts(cls, counts: Counter, min_count: int = 1) -> "Vocabulary":
        vocab = cls()
        for tok, n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
            if n >= min_count:
                vocab.add(tok)
        return vocab

    def add(self, token: str) -> int:
        if token not in self._index:
            self._index[token] = len(self._tokens)
            self._tokens.append(token)
        return self._index[token]

    def id(self, token: str) -> int:
        return self._index.get(token, self._index[UNK])

    def strict_id(self, token: str) -> int:
        if token not in self._index:
            raise ContractError(f"token {token!r} not in vocabulary")
        return self._index[token]

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def bos_id(self) -> int:
        return 1

    @property
    def eos_id(self) -> int:
        return 2

    @property
    def unk_id(self) -> int:
        return 3

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.token(i) for i in ids]

    def to_list(self) -> List[str]:
        return list(self._tokens)

    @classmethod
    def from_list(cls, tokens: List[str]) -> "Vocabulary":
        if tuple(tokens[:4]) != RESERVED:
            raise ContractError("vocabulary list must start with the reserved tokens")
        vocab = cls()
        for t in tokens[4:]:
            vocab.add(t)
        return vocab
