"""Tests for the text channel: normalisation, embeddings and the sentence CNN."""

import numpy as np
import pytest

from traitfusion.config import TextChannelConfig
from traitfusion.errors import DimensionError, EmptyTranscriptError, MissingModalityError
from traitfusion.models import ClipInputs
from traitfusion.text import (
    EmbeddingTable,
    TextChannel,
    embed_sentence,
    encode_clip,
    normalize_text,
    sentence_forward,
)
from traitfusion.autograd import Tensor


class TestNormalizeText:

    def test_splits_and_lowercases(self):
        transcript = normalize_text("Hello, World! How are you? Fine.")
        assert transcript.sentences == [["hello", "world"], ["how", "are", "you"], ["fine"]]

    def test_keeps_inner_apostrophes(self):
        assert normalize_text("I don't know 'really'").sentences == [
            ["i", "don't", "know", "really"]]

    def test_drops_empty_sentences(self):
        assert normalize_text("...Yes!!  ?  ok").sentences == [["yes"], ["ok"]]

    def test_no_words(self):
        with pytest.raises(EmptyTranscriptError):
            normalize_text("?!. ,,")


class TestEmbeddingTable:

    def test_oov_is_zero(self):
        table = EmbeddingTable(3, {"cat": [1.0, 2.0, 3.0]})
        np.testing.assert_array_equal(table.lookup("cat"), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(table.lookup("dog"), [0.0, 0.0, 0.0])

    def test_vectors_are_read_only(self):
        table = EmbeddingTable(2, {"a": [1.0, 2.0]})
        with pytest.raises(ValueError):
            table.lookup("a")[0] = 5.0

    def test_wrong_dimension(self):
        with pytest.raises(DimensionError):
            EmbeddingTable(3, {"a": [1.0, 2.0]})

    def test_hashed_is_deterministic(self):
        a, b = EmbeddingTable.hashed(5, seed=1), EmbeddingTable.hashed(5, seed=1)
        np.testing.assert_array_equal(a.lookup("word"), b.lookup("word"))
        assert not np.array_equal(a.lookup("word"), a.lookup("other"))
        assert not np.array_equal(a.lookup("word"), EmbeddingTable.hashed(5, 2).lookup("word"))

    def test_embed_sentence_rows(self):
        table = EmbeddingTable(2, {"a": [1.0, 0.0], "b": [0.0, 1.0]})
        np.testing.assert_array_equal(embed_sentence(["b", "a", "zz"], table).data,
                                      [[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]])

    def test_describe(self):
        assert EmbeddingTable.hashed(4, 7).describe() == "hashed:7"
        assert EmbeddingTable(4, source="vec.txt").describe() == "file:vec.txt"


class TestSentenceCNN:

    def test_encoding_width(self, text_config):
        model = TextChannel(text_config, EmbeddingTable.hashed(8))
        encoding = sentence_forward(Tensor(np.ones((6, 8))), model.named_parameters(),
                                    text_config)
        assert encoding.shape == (text_config.filters_per_width * 2,)

    def test_default_width(self):
        assert TextChannelConfig().encoding_dim == 384

    def test_short_sentence_is_padded(self, text_config):
        model = TextChannel(text_config, EmbeddingTable.hashed(8))
        encoding = sentence_forward(Tensor(np.ones((1, 8))), model.named_parameters(),
                                    text_config)
        assert encoding.shape == (8,)

    def test_clip_encoding_is_sentence_mean(self, text_config):
        table = EmbeddingTable.hashed(8, 3)
        model = TextChannel(text_config, table, seed=1)
        params = model.named_parameters()
        transcript = normalize_text("one two three. four five six seven.")
        expected = np.mean([
            sentence_forward(embed_sentence(s, table), params, text_config).data
            for s in transcript.sentences
        ], axis=0)
        np.testing.assert_allclose(encode_clip(transcript, table, params, text_config).data,
                                   expected)

    def test_rejects_wrong_matrix_width(self, text_config):
        model = TextChannel(text_config, EmbeddingTable.hashed(8))
        with pytest.raises(DimensionError):
            sentence_forward(Tensor(np.ones((4, 5))), model.named_parameters(), text_config)


class TestTextChannel:

    def test_evaluation_is_deterministic(self, text_config):
        model = TextChannel(text_config, EmbeddingTable.hashed(8), seed=0)
        inputs = ClipInputs("c", transcript=normalize_text("we plan the trip. wow great fun."))
        first = model.forward(inputs, False)[1].data
        second = model.forward(inputs, False, np.random.default_rng(9))[1].data
        np.testing.assert_array_equal(first, second)
        assert np.all((first > 0.0) & (first < 1.0))

    def test_dropout_only_while_training(self, text_config):
        model = TextChannel(text_config, EmbeddingTable.hashed(8), seed=0)
        inputs = ClipInputs("c", transcript=normalize_text("a b c d e. f g h."))
        runs = [model.encode(inputs, True, np.random.default_rng(s)).data for s in range(5)]
        assert any(not np.array_equal(runs[0], other) for other in runs[1:])

    def test_table_dimension_must_match(self, text_config):
        with pytest.raises(DimensionError):
            TextChannel(text_config, EmbeddingTable.hashed(5))

    def test_missing_transcript(self, text_config):
        with pytest.raises(MissingModalityError):
            TextChannel(text_config, EmbeddingTable.hashed(8)).forward(ClipInputs("c"))

    def test_parameter_names(self, text_config):
        names = set(TextChannel(text_config, EmbeddingTable.hashed(8)).named_parameters())
        assert names == {"text.conv2.kernels", "text.conv2.bias", "text.conv3.kernels",
                         "text.conv3.bias", "text.fc1.weights", "text.fc1.bias",
                         "text.head.weights", "text.head.bias"}
