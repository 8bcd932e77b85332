import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from framesift.media_io import (
    DetectionFormatError, DetectionRecord, Frame, InMemoryVideo, ManifestEntry, ManifestError, MediaError,
    PnmError, PnmSequence, SampleManifest, Y4MBadMagicError, Y4MError, Y4MMissingTokenError,
    Y4MTruncatedFrameError, Y4MVideo, decode_pnm, encode_pnm, encode_y4m, format_detections, format_number,
    list_videos, loads_manifest, parse_detections, read_detections, read_manifest, read_y4m, rgb_to_yuv420,
    write_manifest, write_pnm, write_y4m, yuv420_to_rgb,
)


def y4m_bytes(header: str, frames: int, frame_size: int, fill: int = 0) -> bytes:
    return header.encode() + b"\n" + (b"FRAME\n" + bytes([fill]) * frame_size) * frames


class TestY4M:
    def test_tiny_header(self):
        src, frames = read_y4m(y4m_bytes("YUV4MPEG2 W4 H2 F10:1", 1, 12))
        assert (src.width, src.height, src.fps, src.frame_count) == (4, 2, Fraction(10), 1)
        assert len(list(frames)) == 1

    def test_ntsc_rate_is_rational(self):
        src, _ = read_y4m(y4m_bytes("YUV4MPEG2 W2 H2 F30000:1001", 0, 6))
        assert src.fps == Fraction(30000, 1001)

    def test_full_hd_payload(self):
        data = y4m_bytes("YUV4MPEG2 W1920 H1080 F10:1 C420jpeg", 2, 1920 * 1080 * 3 // 2)
        video = Y4MVideo(data)
        assert video.frame_size == 1920 * 1080 * 3 // 2
        assert len(video) == 2 and video.source.fps == 10

    def test_frame_parameters_are_skipped(self):
        data = b"YUV4MPEG2 W2 H2 F1:1\nFRAME Ixyz\n" + bytes(range(6))
        f = Y4MVideo(data).frame(0)
        assert f.pixels.tolist() == [[0, 1], [2, 3]]

    def test_odd_dimensions_chroma(self):
        data = y4m_bytes("YUV4MPEG2 W3 H3 F1:1", 1, 9 + 2 * 4)
        assert Y4MVideo(data).chroma_shape == (2, 2)

    def test_bad_magic_names_offset(self):
        with pytest.raises(Y4MBadMagicError) as ei:
            read_y4m(b"YUV4MPEG W2 H2 F1:1\n")
        assert ei.value.offset == 0

    @pytest.mark.parametrize("missing", ["W", "H", "F"])
    def test_missing_token(self, missing):
        tokens = {"W": "W2", "H": "H2", "F": "F1:1"}
        del tokens[missing]
        with pytest.raises(Y4MMissingTokenError, match=missing):
            read_y4m(("YUV4MPEG2 " + " ".join(tokens.values()) + "\n").encode())

    def test_truncated_frame_offset(self):
        data = y4m_bytes("YUV4MPEG2 W2 H2 F1:1", 2, 6)[:-1]
        with pytest.raises(Y4MTruncatedFrameError) as ei:
            read_y4m(data)
        assert ei.value.offset == len(b"YUV4MPEG2 W2 H2 F1:1\n") + 6 + 6 + 6

    def test_errors_are_distinct(self):
        kinds = {Y4MBadMagicError, Y4MMissingTokenError, Y4MTruncatedFrameError}
        assert len(kinds) == 3 and all(issubclass(k, Y4MError) for k in kinds)

    def test_non_420_rejected(self):
        with pytest.raises(Y4MError, match="C444"):
            read_y4m(y4m_bytes("YUV4MPEG2 W2 H2 F1:1 C444", 1, 12))

    def test_frame_count_equals_markers(self, rng):
        for n in (0, 1, 5):
            assert Y4MVideo(y4m_bytes("YUV4MPEG2 W4 H4 F25:1", n, 24)).source.frame_count == n

    def test_random_access_matches_sequential(self, rng):
        frames = [Frame(rng.integers(0, 256, (6, 8), dtype=np.uint8), 1, i) for i in range(5)]
        video = Y4MVideo(encode_y4m(frames, 10))
        assert video.frame(3) == frames[3]
        assert [f for f in video.frames()] == frames

    def test_file_roundtrip(self, tmp_path, rng):
        frames = [Frame(rng.integers(0, 256, (4, 6), dtype=np.uint8), 1, i) for i in range(3)]
        write_y4m(tmp_path / "a.y4m", frames, Fraction(30000, 1001), {"C": "420jpeg"})
        src, it = read_y4m(tmp_path / "a.y4m")
        assert src.fps == Fraction(30000, 1001) and src.params["C"] == "420jpeg"
        assert list(it) == frames

    def test_canonical_header_roundtrip_is_byte_exact(self, rng):
        y = rng.integers(0, 256, (4, 4), dtype=np.uint8)
        chroma = rng.integers(0, 256, (2, 2, 2), dtype=np.uint8)
        data = b"YUV4MPEG2 W4 H4 F10:1 Ip A1:1 C420jpeg\nFRAME\n" + y.tobytes() + chroma.tobytes()
        video = Y4MVideo(data)
        again = encode_y4m(video.frames(keep_chroma=True), video.source.fps, video.source.params)
        assert again == data

    def test_known_colours(self):
        # full-range BT.601: neutral chroma is grey; pure red chroma for Y=76
        grey = yuv420_to_rgb(np.full((2, 2), 90, np.uint8), np.full((1, 1), 128, np.uint8),
                             np.full((1, 1), 128, np.uint8))
        assert (grey == 90).all()
        red = np.zeros((2, 2, 3), np.uint8)
        red[..., 0] = 255
        y, u, v = rgb_to_yuv420(red)
        assert y[0, 0] == 76 and u[0, 0] == 85 and v[0, 0] == 255
        back = yuv420_to_rgb(y, u, v)
        assert np.abs(back.astype(int) - red).max() <= 2


class TestPnm:
    def test_p5_example(self):
        f = decode_pnm(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 7]))
        assert f.pixels.tolist() == [[0, 128], [255, 7]] and not f.is_rgb

    def test_p6_red_pixel(self):
        f = decode_pnm(b"P6 1 1 255 " + bytes([255, 0, 0]))
        assert f.is_rgb and f.pixels.tolist() == [[[255, 0, 0]]]

    def test_comments_in_header(self):
        f = decode_pnm(b"P5\n# made by hand\n1 # w\n1\n255\n\x09")
        assert f.pixels[0, 0] == 9

    @pytest.mark.parametrize("data, msg", [
        (b"P5\n1 1\n65535\n\x00\x00", "maxval"),
        (b"P2\n1 1\n255\n0", "magic"),
        (b"P5\n2 2\n255\n\x00", "truncated"),
        (b"P5\n2", "truncated"),
    ])
    def test_rejects(self, data, msg):
        with pytest.raises(PnmError, match=msg):
            decode_pnm(data)

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9))), st.booleans())
    def test_roundtrip_bytes(self, px, rgb):
        if rgb:
            px = np.stack([px, px[::-1], 255 - px], axis=-1)
        data = encode_pnm(Frame(px))
        assert encode_pnm(decode_pnm(data)) == data
        assert np.array_equal(decode_pnm(data).pixels, px)

    def test_sequence_directory(self, tmp_path, rng):
        d = tmp_path / "seq"
        d.mkdir()
        for i in range(3):
            write_pnm(d / f"{i:03d}.pgm", Frame(np.full((2, 3), i, np.uint8)))
        seq = PnmSequence(d, 4, 5)
        assert (seq.source.frame_count, seq.source.width, seq.source.height) == (3, 3, 2)
        assert seq.frame(2).pixels[0, 0] == 2 and seq.frame(1, rgb=True).is_rgb

    def test_sequence_mixed_sizes(self, tmp_path):
        d = tmp_path / "seq"
        d.mkdir()
        write_pnm(d / "a.pgm", Frame(np.zeros((2, 2), np.uint8)))
        write_pnm(d / "b.pgm", Frame(np.zeros((3, 2), np.uint8)))
        with pytest.raises(MediaError, match="mixed"):
            PnmSequence(d)


class TestFrame:
    def test_immutable_copy(self):
        src = np.zeros((2, 2), np.uint8)
        f = Frame(src)
        src[0, 0] = 9
        assert f.pixels[0, 0] == 0
        with pytest.raises(ValueError):
            f.pixels[0, 0] = 1

    @pytest.mark.parametrize("bad", [np.zeros((0, 3), np.uint8), np.zeros((2, 2, 2), np.uint8),
                                     np.zeros((2, 2), np.float32)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            Frame(bad)

    def test_rgb_luma(self):
        f = Frame(np.array([[[255, 255, 255], [0, 0, 0]]], np.uint8))
        assert f.luma().tolist() == [[255, 0]]

    def test_list_videos_ids_alphabetical(self, tmp_path):
        for name in ("b.y4m", "a.y4m"):
            write_y4m(tmp_path / name, [Frame(np.zeros((2, 2), np.uint8))])
        vids = list_videos(tmp_path)
        assert [(v.source.video_id, v.source.path.rsplit("/", 1)[1]) for v in vids] == [(1, "a.y4m"), (2, "b.y4m")]

    def test_list_videos_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            list_videos(tmp_path / "nope")

    def test_in_memory_mixed(self):
        with pytest.raises(MediaError):
            InMemoryVideo([np.zeros((2, 2), np.uint8), np.zeros((2, 3), np.uint8)])


class TestDetections:
    def test_submission_row(self):
        (r,) = parse_detections("3,17,100,200,50,80,2,0.91", True)
        assert r == DetectionRecord(3, 17, 100, 200, 50, 80, 2, 0.91)

    def test_gt_row(self):
        (r,) = parse_detections("1,1,0,0,10,10,1\n", False)
        assert r.confidence is None and r.box == (0, 0, 10, 10)

    @pytest.mark.parametrize("text, has_conf, msg", [
        ("1,1,0,0,0,10,1,0.5", True, "bb_width must be positive"),
        ("1,1,0,0,10,10,1", True, "expected 8 columns"),
        ("1,1,0,x,10,10,1", False, "bb_top must be numeric"),
        ("1,1,0,0,10,10,1,1.5", True, "confidence"),
        ("1,1,0,0,10,10,0", False, "class_id"),
        ("1,1.5,0,0,10,10,1", False, "frame_id must be an integer"),
        ("1,1,0,0,nan,10,1", False, "finite"),
    ])
    def test_errors(self, text, has_conf, msg):
        with pytest.raises(DetectionFormatError, match=msg):
            parse_detections(text, has_conf)

    def test_error_reports_row(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1,1,0,0,1,1,1\n\n1,2,0,0,1,1\n")
        with pytest.raises(DetectionFormatError) as ei:
            read_detections(p, False)
        assert ei.value.row == 3 and str(p) in str(ei.value)

    def test_format_numbers(self):
        assert [format_number(v) for v in (5, 5.0, 0.1 + 0.2, 12.34567, -0.0001, 2.5)] == \
            ["5", "5", "0.3", "12.346", "0", "2.5"]

    def test_canonical_text_idempotent(self):
        text = "1,2,10.50,3,4.0,5,1,0.9\n2,1,0,0,1.23456,7,3,1\n"
        once = format_detections(parse_detections(text, True))
        assert once == "1,2,10.5,3,4,5,1,0.900000\n2,1,0,0,1.235,7,3,1.000000\n"
        assert format_detections(parse_detections(once, True)) == once


def sample_manifest() -> SampleManifest:
    return SampleManifest(7, "balanced", (
        ManifestEntry(1, 4, "night", "train", False, 5, "stride-sample:stride=5"),
        ManifestEntry(1, 0, "night", "train", True, 0, "negative:background"),
    ))


class TestManifest:
    def test_empty_roundtrip(self, tmp_path):
        m = SampleManifest(0, "paper", ())
        write_manifest(tmp_path / "m.json", m)
        assert read_manifest(tmp_path / "m.json") == m
        assert read_manifest(tmp_path / "m.json").dumps() == (tmp_path / "m.json").read_text()

    def test_negative_roundtrip_bytes(self):
        text = sample_manifest().dumps()
        assert loads_manifest(text).dumps() == text
        assert loads_manifest(text).negatives[0].is_negative

    def test_duplicate_rejected_with_pointer(self):
        doc = json.loads(sample_manifest().dumps())
        doc["entries"].append(dict(doc["entries"][0]))
        with pytest.raises(ManifestError) as ei:
            loads_manifest(json.dumps(doc))
        assert ei.value.pointer == "/entries/2"

    def test_same_frame_positive_and_negative_allowed(self):
        SampleManifest(0, "paper", (ManifestEntry(1, 0, "day"), ManifestEntry(1, 0, "day", is_negative=True)))

    @pytest.mark.parametrize("mutate, pointer", [
        (lambda d: d["entries"][1].__setitem__("split", "test"), "/entries/1/split"),
        (lambda d: d.__setitem__("seed", -1), "/seed"),
        (lambda d: d["entries"][0].pop("category"), "/entries/0"),
        (lambda d: d.__setitem__("mode", "random"), "/mode"),
    ])
    def test_schema_errors(self, mutate, pointer):
        doc = json.loads(sample_manifest().dumps())
        mutate(doc)
        with pytest.raises(ManifestError) as ei:
            loads_manifest(json.dumps(doc))
        assert ei.value.pointer == pointer

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 5), st.integers(0, 50), st.booleans(),
                              st.sampled_from(["train", "val", "none"]), st.text(max_size=8)),
                    unique_by=lambda t: t[:3], max_size=12),
           st.integers(0, 2**64 - 1))
    def test_roundtrip_property(self, rows, seed):
        m = SampleManifest(seed, "paper", tuple(
            ManifestEntry(v, f, "fog", s, neg, 0, p) for v, f, neg, s, p in rows))
        assert loads_manifest(m.dumps()) == m
        assert loads_manifest(m.dumps()).dumps() == m.dumps()
