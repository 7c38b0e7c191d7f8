import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizer

# wordpiece vocabulary large enough to tokenize the test labels non-trivially
_VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "a", "an", "the", "of", "on", "with", "graph", "property",
    "bio", "info", "##logy", "##rmatics", "##informatics",
    "non", "-", "mut", "##agenic", "salmonella", "typhimurium",
    "enzyme", "protein", "paper", "image", "central", "nodes", "are",
    "this", "is", "machine", "learning", "theory",
]


@pytest.fixture(scope="session")
def tiny_encoder_dir(tmp_path_factory):
    """Small randomly initialized encoder saved locally, loadable by path."""
    path = tmp_path_factory.mktemp("encoder") / "tiny-bert"
    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(_VOCAB),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(path)
    vocab_file = path / "vocab.txt"
    vocab_file.write_text("\n".join(_VOCAB))
    BertTokenizer(str(vocab_file)).save_pretrained(path)
    return str(path)
