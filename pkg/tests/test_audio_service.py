import struct

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st
from hypothesis.extra.numpy import arrays
from openpyxl import Workbook

from app.core.exceptions import (
    AllSilentError,
    AudioFileNotFoundError,
    BadEnumValueError,
    CorruptHeaderError,
    DuplicateEntryError,
    EmptyAudioError,
    InvalidManifestRowError,
    MissingColumnError,
    UnsupportedEncodingError,
)
from app.models.audio import AudioClip, Cohort, SoundKind, TrimConfig
from app.services.audio_service import (
    decode_wav,
    downmix,
    encode_wav,
    load_manifest,
    load_wav,
    trim_silence,
    trim_span,
    write_wav,
)
from tests.conftest import wav_bytes, write_manifest, write_wav_file

# デコード

def test_stereo_is_downmixed_by_channel_mean():
    stereo = np.column_stack([np.ones(100), np.zeros(100)])
    clip = decode_wav(wav_bytes(stereo, subtype="FLOAT"))
    assert len(clip) == 100
    assert np.all(clip.samples == 0.5)

def test_sample_rate_and_length_pass_through():
    clip = decode_wav(wav_bytes(np.zeros(8000), 8000))
    assert clip.sample_rate_hz == 8000
    assert len(clip) == 8000

def test_pcm24_is_normalized_by_type_maximum():
    clip = decode_wav(wav_bytes(np.full(64, 0.5), subtype="PCM_24"))
    assert np.allclose(clip.samples, 0.5, atol=2.0 ** -23)

def test_non_riff_bytes_are_rejected():
    with pytest.raises(UnsupportedEncodingError):
        decode_wav(b"OggS" + b"\x00" * 60)

def test_unsupported_subtype_is_rejected():
    with pytest.raises(UnsupportedEncodingError):
        decode_wav(wav_bytes(np.zeros(100), subtype="PCM_U8"))

def test_more_than_two_channels_is_rejected():
    with pytest.raises(UnsupportedEncodingError):
        decode_wav(wav_bytes(np.zeros((100, 3)), subtype="PCM_16"))

def test_truncated_data_chunk_is_corrupt():
    data = wav_bytes(np.zeros(1000))
    with pytest.raises(CorruptHeaderError):
        decode_wav(data[:-200])

def test_header_without_data_chunk_is_corrupt():
    fmt = struct.pack("<HHIIHH", 1, 1, 8000, 16000, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    data = b"RIFF" + struct.pack("<I", len(body)) + body
    with pytest.raises(CorruptHeaderError):
        decode_wav(data)

def test_zero_frames_is_empty():
    fmt = struct.pack("<HHIIHH", 1, 1, 8000, 16000, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", 0)
    data = b"RIFF" + struct.pack("<I", len(body)) + body
    with pytest.raises(EmptyAudioError):
        decode_wav(data)

def test_missing_file(tmp_path):
    with pytest.raises(AudioFileNotFoundError):
        load_wav(tmp_path / "nope.wav")

def test_write_then_load_within_quantization(tmp_path):
    rng = np.random.default_rng(0)
    clip = AudioClip(samples=rng.uniform(-0.9, 0.9, 4000), sample_rate_hz=16000)
    loaded = load_wav(write_wav(clip, tmp_path / "x.wav"))
    assert loaded.sample_rate_hz == 16000
    assert np.max(np.abs(loaded.samples - clip.samples)) <= 1.0 / 32768

def test_encode_wav_is_deterministic():
    clip = AudioClip(samples=np.linspace(-1, 1, 500), sample_rate_hz=8000)
    assert encode_wav(clip) == encode_wav(clip)

def test_pcm16_values_are_normalized_by_32768(tmp_path):
    path = write_wav_file(tmp_path / "x.wav", np.array([0, 16384, -32768], dtype=np.int16))
    assert load_wav(path).samples.tolist() == [0.0, 0.5, -1.0]

@given(arrays(np.float64, st.integers(1, 64), elements=st.floats(-1, 1)))
def test_downmix_of_identical_channels_is_identity(channel):
    assert np.allclose(downmix(np.column_stack([channel, channel])), channel)

@given(
    arrays(np.float64, 32, elements=st.floats(-1, 1)),
    arrays(np.float64, 32, elements=st.floats(-1, 1)),
    st.floats(-4, 4),
)
def test_downmix_is_linear(left, right, alpha):
    scaled = downmix(np.column_stack([alpha * left, alpha * right]))
    np.testing.assert_allclose(scaled, alpha * downmix(np.column_stack([left, right])), rtol=0, atol=1e-12)

# トリミング

def test_trim_keeps_exactly_the_active_middle():
    sr = 8000
    square = np.where(np.arange(800) % 40 < 20, 1.0, -1.0)
    samples = np.concatenate([np.zeros(800), square, np.zeros(800)])
    trimmed = trim_silence(AudioClip(samples=samples, sample_rate_hz=sr), TrimConfig())
    assert len(trimmed) == 800
    assert np.array_equal(trimmed.samples, square)

def test_trim_without_silence_returns_clip_unchanged(make_clip):
    clip = make_clip(length=1600)
    assert trim_silence(clip, TrimConfig()) is clip

def test_all_silent_clip_raises():
    with pytest.raises(AllSilentError):
        trim_silence(AudioClip(samples=np.zeros(1000), sample_rate_hz=8000), TrimConfig())

def test_interior_silence_is_kept():
    tone = np.full(320, 0.5)
    samples = np.concatenate([tone, np.zeros(480), tone])
    clip = AudioClip(samples=samples, sample_rate_hz=8000)
    assert trim_span(clip, TrimConfig()) == (0, len(samples))

@hyp_settings(max_examples=50, deadline=None)
@given(
    st.integers(0, 1000),
    arrays(np.float64, st.integers(1, 1500), elements=st.floats(-1, 1)),
    st.integers(0, 1000),
)
def test_trim_is_idempotent(lead, body, trail):
    clip = AudioClip(samples=np.concatenate([np.zeros(lead), body, np.zeros(trail)]), sample_rate_hz=8000)
    cfg = TrimConfig()
    try:
        once = trim_silence(clip, cfg)
    except AllSilentError:
        return
    twice = trim_silence(once, cfg)
    assert np.array_equal(once.samples, twice.samples)

# マニフェスト

def test_manifest_resolves_relative_paths(tmp_path):
    manifest = write_manifest(tmp_path / "m.csv", [
        ("a.wav", "s1", "covid", "Cough", 1),
        ("sub/b.wav", "s2", "HEALTHY", "voice", 2),
    ])
    entries = load_manifest(manifest)
    assert [e.label for e in entries] == ["s1_cough_1", "s2_voice_2"]
    assert entries[0].path == tmp_path / "a.wav"
    assert entries[0].cohort is Cohort.COVID
    assert entries[1].kind is SoundKind.VOICE

def test_manifest_missing_column(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("path,subject_id,cohort,kind\na.wav,s1,COVID,COUGH\n", encoding="utf-8")
    with pytest.raises(MissingColumnError):
        load_manifest(path)

def test_manifest_bad_enum(tmp_path):
    manifest = write_manifest(tmp_path / "m.csv", [("a.wav", "s1", "flu", "COUGH", 1)])
    with pytest.raises(BadEnumValueError):
        load_manifest(manifest)

def test_manifest_duplicate_entry(tmp_path):
    manifest = write_manifest(tmp_path / "m.csv", [
        ("a.wav", "s1", "COVID", "COUGH", 1),
        ("b.wav", "s1", "COVID", "COUGH", 1),
    ])
    with pytest.raises(DuplicateEntryError):
        load_manifest(manifest)

@pytest.mark.parametrize("session", ["x", "0"])
def test_manifest_invalid_session(tmp_path, session):
    manifest = write_manifest(tmp_path / "m.csv", [("a.wav", "s1", "COVID", "COUGH", session)])
    with pytest.raises(InvalidManifestRowError):
        load_manifest(manifest)

def test_manifest_from_xlsx(tmp_path):
    workbook = Workbook()
    sheet = workbook.active
    sheet.append(["path", "subject_id", "cohort", "kind", "session"])
    sheet.append(["a.wav", "s1", "COVID", "BREATH", 1])
    sheet.append(["b.wav", "s2", "HEALTHY", "COUGH", 3])
    workbook.save(tmp_path / "m.xlsx")

    entries = load_manifest(tmp_path / "m.xlsx")
    assert [e.label for e in entries] == ["s1_breath_1", "s2_cough_3"]

def test_manifest_entries_load(tmp_path):
    write_wav_file(tmp_path / "a.wav", np.full(100, 0.25))
    manifest = write_manifest(tmp_path / "m.csv", [("a.wav", "s1", "COVID", "COUGH", 1)])
    clip = load_wav(load_manifest(manifest)[0].path)
    assert np.allclose(clip.samples, 0.25)
