import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from moosenet.dataset import (
    AudioClip,
    load_audio,
    load_embedding,
    load_manifest,
    load_pairs,
    save_audio,
    save_embedding,
    split_view,
)
from moosenet.errors import (
    BadMagic,
    DuplicateId,
    MalformedRow,
    MissingPath,
    NonFiniteValue,
    RatingOutOfRange,
    TruncatedFile,
    UnsupportedFormat,
)

HEADER = "utt_id,system_id,split,embedding_path,audio_path,mos,duration_s\n"


@pytest.fixture
def emb_dir(tmp_path):
    (tmp_path / "emb").mkdir()
    save_embedding(tmp_path / "emb" / "u1.mnE", np.zeros((1, 2)))
    return tmp_path


def write(path, text):
    path.write_text(text)
    return path


def test_manifest_row_maps_fields(emb_dir):
    m = write(emb_dir / "m.csv", HEADER + "u1,sysA,train,emb/u1.mnE,,3.5,2.1\n")
    (rec,) = load_manifest(m)
    assert rec.utt_id == "u1" and rec.system_id == "sysA" and rec.split == "train"
    assert rec.mos == 3.5 and rec.duration_s == 2.1
    assert rec.audio_path is None
    assert rec.embedding_path == emb_dir / "emb" / "u1.mnE"


def test_manifest_duplicate_id(emb_dir):
    m = write(emb_dir / "m.csv", HEADER + "u1,sysA,train,,,3.5,2.1\nu1,sysB,dev,,,2.0,1.0\n")
    with pytest.raises(DuplicateId):
        load_manifest(m)


def test_manifest_malformed_row_reports_line(tmp_path):
    m = write(tmp_path / "m.csv", HEADER + "u1,sysA,train,,,3.5,2.1\nu2,sysA,train,,,abc,2.0\n")
    with pytest.raises(MalformedRow) as exc:
        load_manifest(m)
    assert exc.value.line == 3


@pytest.mark.parametrize("row", [
    "u1,sysA,valid,,,3.0,1.0",   # bad split
    "u1,sysA,train,,,3.0,0",     # zero duration
    "u1,sysA,train,,,6.0,1.0",   # mos outside [1,5]
    "u1,sysA,train,,,3.0",       # short row
])
def test_manifest_rejects_bad_rows(tmp_path, row):
    with pytest.raises(MalformedRow):
        load_manifest(write(tmp_path / "m.csv", HEADER + row + "\n"))


def test_manifest_bad_header(tmp_path):
    with pytest.raises(MalformedRow):
        load_manifest(write(tmp_path / "m.csv", "utt,sys\nu1,s\n"))


def test_manifest_missing_path(tmp_path):
    with pytest.raises(MissingPath):
        load_manifest(write(tmp_path / "m.csv", HEADER + "u1,sysA,train,nowhere.mneb,,3.0,1.0\n"))


def test_rating_out_of_range(tmp_path):
    m = write(tmp_path / "m.csv", HEADER + "u1,sysA,train,,,3.0,1.0\n")
    r = write(tmp_path / "r.csv", "utt_id,listener_id,rating\nu1,L1,6\n")
    with pytest.raises(RatingOutOfRange):
        load_manifest(m, ratings_path=r)


def test_ratings_join_and_mean_consistency(tmp_path):
    m = write(tmp_path / "m.csv", HEADER + "u1,sysA,train,,,2.5,1.0\n")
    r = write(tmp_path / "r.csv", "utt_id,listener_id,rating\nu1,L1,2\nu1,L2,3\n")
    (rec,) = load_manifest(m, ratings_path=r)
    assert rec.listener_ratings == (("L1", 2), ("L2", 3))
    bad = write(tmp_path / "m2.csv", HEADER + "u1,sysA,train,,,3.0,1.0\n")
    with pytest.raises(MalformedRow):
        load_manifest(bad, ratings_path=r)


def test_aux_targets(tmp_path):
    m = write(tmp_path / "m.csv", HEADER + "u1,sysA,train,,,2.5,1.0\nu2,sysA,dev,,,3.0,1.0\n")
    a = write(tmp_path / "a.csv", "utt_id,stoi,mcd\nu1,0.8,\n")
    recs = load_manifest(m, aux_path=a)
    assert recs[0].aux_targets.stoi == 0.8 and recs[0].aux_targets.mcd is None
    assert recs[1].aux_targets is None
    assert [r.utt_id for r in split_view(recs, "dev")] == ["u2"]


def test_manifest_load_is_pure(emb_dir):
    m = write(emb_dir / "m.csv", HEADER + "u1,sysA,train,emb/u1.mnE,,3.5,2.1\n")
    assert load_manifest(m) == load_manifest(m)


def test_embedding_zero_matrix(tmp_path):
    p = tmp_path / "e.mneb"
    p.write_bytes(b"MNEB" + struct.pack("<III", 1, 1, 2) + struct.pack("<2f", 0.0, 0.0))
    e = load_embedding(p)
    assert e.frames == 1 and e.dim == 2
    np.testing.assert_array_equal(e.data, np.zeros((1, 2)))


def test_embedding_truncated(tmp_path):
    p = tmp_path / "e.mneb"
    p.write_bytes(b"MNEB" + struct.pack("<III", 1, 2, 2) + struct.pack("<2f", 0.0, 0.0))
    with pytest.raises(TruncatedFile):
        load_embedding(p)


def test_embedding_nan(tmp_path):
    p = tmp_path / "e.mneb"
    p.write_bytes(b"MNEB" + struct.pack("<III", 1, 1, 2) + struct.pack("<f", 0.0) + b"\x00\x00\xc0\x7f")
    with pytest.raises(NonFiniteValue):
        load_embedding(p)


def test_embedding_bad_magic(tmp_path):
    p = tmp_path / "e.mneb"
    p.write_bytes(b"XXXX" + struct.pack("<III", 1, 1, 1) + struct.pack("<f", 0.0))
    with pytest.raises(BadMagic):
        load_embedding(p)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 5)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_embedding_round_trip_bit_exact(tmp_path_factory, data):
    p = tmp_path_factory.mktemp("emb") / "x.mneb"
    save_embedding(p, data)
    assert load_embedding(p).data.tobytes() == data.astype("<f4").tobytes()


def test_audio_scaling(tmp_path):
    p = tmp_path / "a.wav"
    save_audio(p, AudioClip(np.array([0.5, -1.0]), 16000))
    clip = load_audio(p)
    assert clip.sample_rate == 16000
    np.testing.assert_array_equal(clip.samples, [0.5, -1.0])


def test_audio_duration_matches_length(tmp_path):
    p = tmp_path / "a.wav"
    save_audio(p, AudioClip(np.zeros(16000 * 2 + 7), 16000))
    clip = load_audio(p)
    assert abs(clip.duration_s - (2 + 7 / 16000)) < 1 / 16000


def test_stereo_rejected(tmp_path):
    import wave

    p = tmp_path / "s.wav"
    with wave.open(str(p), "wb") as wf:
        wf.setnchannels(2)
        wf.setsampwidth(2)
        wf.setframerate(16000)
        wf.writeframes(b"\x00\x00" * 4)
    with pytest.raises(UnsupportedFormat):
        load_audio(p)


def test_8bit_rejected(tmp_path):
    import wave

    p = tmp_path / "b.wav"
    with wave.open(str(p), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(1)
        wf.setframerate(16000)
        wf.writeframes(b"\x80" * 4)
    with pytest.raises(UnsupportedFormat):
        load_audio(p)


def test_pairs_file(small_synthetic):
    pairs = load_pairs(small_synthetic.pairs)
    e = next(iter(pairs.values()))
    assert 10 <= e.snr_db <= 20
    assert e.noisy_embedding_path.exists()
