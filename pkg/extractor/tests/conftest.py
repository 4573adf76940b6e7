"""Session fixtures: a synthetic corpus with a Zipf-like word distribution
and a small randomly initialized encoder saved to disk.  No network access
is needed; the goal is exercising the extraction pipeline end to end."""

import numpy as np
import pytest
import torch

SYLLABLES = [
    "ba", "re", "mo", "ti", "lu", "ka", "ne", "so", "vi", "du",
    "pa", "el", "or", "in", "as", "um", "ra", "ke", "no", "li",
]


def make_vocabulary(rng, size):
    words = []
    seen = set()
    while len(words) < size:
        n_syllables = int(rng.integers(2, 5))
        word = "".join(rng.choice(SYLLABLES) for _ in range(n_syllables))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def make_corpus(rng, words, n_sentences, min_len=4, max_len=18):
    ranks = np.arange(1, len(words) + 1, dtype=np.float64)
    weights = 1.0 / ranks
    weights /= weights.sum()
    lines = []
    for _ in range(n_sentences):
        length = int(rng.integers(min_len, max_len + 1))
        picks = rng.choice(len(words), size=length, p=weights)
        lines.append(" ".join(words[i] for i in picks))
    return lines


@pytest.fixture(scope="session")
def word_list():
    return make_vocabulary(np.random.default_rng(101), 500)


@pytest.fixture(scope="session")
def corpus_path(tmp_path_factory, word_list):
    rng = np.random.default_rng(202)
    lines = make_corpus(rng, word_list, n_sentences=2200)
    path = tmp_path_factory.mktemp("corpus") / "sentences.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory, word_list):
    from transformers import BertConfig, BertModel, BertTokenizer

    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab = {token: index for index, token in enumerate(specials + word_list)}
    tokenizer = BertTokenizer(vocab=vocab, do_lower_case=False)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=64,
        num_hidden_layers=4,
        num_attention_heads=4,
        intermediate_size=128,
        max_position_embeddings=64,
    )
    torch.manual_seed(7)
    model = BertModel(config)
    path = tmp_path_factory.mktemp("model") / "tiny-encoder"
    tokenizer.save_pretrained(path)
    model.save_pretrained(path)
    return path
