"""Tests for WAV, frame, feature-file and embedding-table I/O."""

import numpy as np
import pytest
from PIL import Image
from scipy.io import wavfile

from traitfusion.errors import (
    DataIOError,
    DimensionError,
    EmbeddingParseError,
    NoFramesError,
    UnsupportedFormatError,
)
from traitfusion.media import (
    ClipLoader,
    load_embeddings,
    read_feature_file,
    read_frame,
    read_frames,
    read_wav,
    write_embeddings,
    write_feature_file,
    write_frame,
    write_wav,
)
from traitfusion.models import AudioClip, ClipRecord, FrameImage


# ============================================================================
# AUDIO
# ============================================================================


class TestWav:

    def test_pcm16_scaling(self, tmp_path):
        path = tmp_path / "a.wav"
        wavfile.write(str(path), 8000, np.array([0, 16384, -32768, 32767], dtype=np.int16))
        clip = read_wav(path)
        assert clip.sample_rate == 8000
        np.testing.assert_array_equal(clip.samples, [0.0, 0.5, -1.0, 32767 / 32768])

    def test_stereo_is_averaged(self, tmp_path):
        path = tmp_path / "s.wav"
        data = np.array([[16384, 0], [-16384, -16384]], dtype=np.int16)
        wavfile.write(str(path), 16000, data)
        np.testing.assert_array_equal(read_wav(path).samples, [0.25, -0.5])

    def test_float_wav_unsupported(self, tmp_path):
        path = tmp_path / "f.wav"
        wavfile.write(str(path), 8000, np.zeros(10, dtype=np.float32))
        with pytest.raises(UnsupportedFormatError):
            read_wav(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIOError):
            read_wav(tmp_path / "none.wav")

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "t.wav"
        wavfile.write(str(path), 8000, np.zeros(1000, dtype=np.int16))
        path.write_bytes(path.read_bytes()[:30])
        with pytest.raises((DataIOError, UnsupportedFormatError)):
            read_wav(path)

    def test_write_preserves_quantized_samples(self, tmp_path):
        samples = np.round(np.linspace(-1.0, 0.99, 50) * 32768) / 32768
        path = write_wav(tmp_path / "out" / "q.wav", AudioClip(samples, 8000))
        np.testing.assert_array_equal(read_wav(path).samples, samples)


# ============================================================================
# FRAMES AND FEATURES
# ============================================================================


class TestFrames:

    def test_channel_order_is_blue_red_green(self, tmp_path):
        path = tmp_path / "p.png"
        rgb = np.zeros((2, 2, 3), dtype=np.uint8)
        rgb[..., 0], rgb[..., 1], rgb[..., 2] = 255, 0, 51
        Image.fromarray(rgb).save(path)
        frame = read_frame(path)
        assert frame.pixels.shape == (3, 2, 2)
        np.testing.assert_allclose(frame.pixels[:, 0, 0], [0.2, 1.0, 0.0])

    def test_write_then_read_quantized(self, tmp_path):
        pixels = np.round(np.random.default_rng(0).uniform(size=(3, 4, 4)) * 255) / 255
        path = write_frame(tmp_path / "f.png", FrameImage(pixels))
        np.testing.assert_allclose(read_frame(path).pixels, pixels, atol=1e-12)

    def test_directory_sorted_by_name(self, tmp_path):
        for name, value in (("b.png", 1.0), ("a.png", 0.0)):
            write_frame(tmp_path / name, FrameImage(np.full((3, 2, 2), value)))
        (tmp_path / "notes.txt").write_text("skip me")
        frames = read_frames(tmp_path)
        assert [f.pixels.max() for f in frames] == [0.0, 1.0]

    def test_empty_directory(self, tmp_path):
        with pytest.raises(NoFramesError):
            read_frames(tmp_path)

    def test_not_an_image(self, tmp_path):
        path = tmp_path / "x.png"
        path.write_text("plain text")
        with pytest.raises(UnsupportedFormatError):
            read_frame(path)


class TestFeatureFiles:

    def test_repeated_ids_collect_frames(self, tmp_path):
        path = tmp_path / "f.txt"
        path.write_text("a 1 2 3\nb 0 0 0\na 4 5 6\n")
        features = read_feature_file(path, dim=3)
        assert len(features["a"]) == 2
        np.testing.assert_array_equal(features["a"][1], [4.0, 5.0, 6.0])

    def test_dimension_checked(self, tmp_path):
        path = tmp_path / "f.txt"
        path.write_text("a 1 2 3\nb 1 2\n")
        with pytest.raises(DimensionError, match="line 2"):
            read_feature_file(path, dim=3)

    def test_write_then_read(self, tmp_path):
        features = {"x": [np.array([0.125, -1.5])], "y": [np.array([2.0, 3.0])]}
        path = write_feature_file(tmp_path / "out.txt", features)
        read = read_feature_file(path)
        np.testing.assert_array_equal(read["x"][0], [0.125, -1.5])


# ============================================================================
# EMBEDDINGS
# ============================================================================


class TestEmbeddings:

    def test_load(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("2 3\ncat 1 2 3\ndog 4 5 6\n")
        table = load_embeddings(path)
        assert table.dim == 3 and len(table) == 2
        np.testing.assert_array_equal(table.lookup("dog"), [4.0, 5.0, 6.0])
        np.testing.assert_array_equal(table.lookup("bird"), [0.0, 0.0, 0.0])

    def test_wrong_row_length_names_line(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("2 3\ncat 1 2 3\ndog 4 5\n")
        with pytest.raises(EmbeddingParseError) as info:
            load_embeddings(path)
        assert info.value.line_number == 3

    def test_bad_header(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("three 3\n")
        with pytest.raises(EmbeddingParseError):
            load_embeddings(path)

    def test_count_mismatch(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("3 2\na 1 2\n")
        with pytest.raises(EmbeddingParseError):
            load_embeddings(path)

    def test_write_then_load(self, tmp_path):
        vocab = {"hi": np.array([0.5, -0.25]), "yo": np.array([1.0, 2.0])}
        table = load_embeddings(write_embeddings(tmp_path / "e.txt", vocab))
        np.testing.assert_array_equal(table.lookup("yo"), [1.0, 2.0])


# ============================================================================
# CLIP ASSEMBLY
# ============================================================================


class TestClipLoader:

    def test_loads_synthetic_corpus(self, corpus):
        _, split = corpus
        inputs = ClipLoader().load(split.train[0])
        assert inputs.audio.sample_rate == 8000
        assert len(inputs.audio) == 400
        assert len(inputs.frames) == 2
        assert inputs.transcript.num_tokens > 0
        np.testing.assert_array_equal(inputs.labels, split.train[0].label_array)

    def test_cached(self, corpus):
        _, split = corpus
        loader = ClipLoader()
        assert loader.load(split.test[0]) is loader.load(split.test[0])

    def test_precomputed_features(self, tmp_path, corpus):
        _, split = corpus
        record = split.train[0]
        features = tmp_path / "feat.txt"
        features.write_text(f"{record.clip_id} 1 2\n{record.clip_id} 3 4\n")
        precomputed = ClipRecord(record.clip_id, "train", record.audio_path, str(features),
                                 record.transcript, record.labels)
        inputs = ClipLoader(feature_dim=2).load(precomputed)
        assert inputs.frames is None
        assert len(inputs.features) == 2

    def test_feature_file_without_clip(self, tmp_path, corpus):
        _, split = corpus
        record = split.train[0]
        features = tmp_path / "feat.txt"
        features.write_text("someone_else 1 2\n")
        missing = ClipRecord(record.clip_id, "train", record.audio_path, str(features),
                             record.transcript, record.labels)
        with pytest.raises(NoFramesError):
            ClipLoader().load(missing)
