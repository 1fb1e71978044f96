#!/usr/bin/env python3
"""Writes the wire-protocol golden pairs in tests/golden/protocol.

Responses come from a deterministic stub: each channel's distribution is
derived from sha256("<session_id>/<segment_id>/<channel>") in thousandths,
so the numbers are exact decimals and the files are stable.
"""

import base64
import hashlib
import io
import json
import math
import pathlib
import struct
import wave

LABELS = ["joy", "sadness", "anger", "anticipation", "disgust", "fear", "trust", "surprise"]
OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "golden" / "protocol"


def stub_distribution(key):
    digest = hashlib.sha256(key.encode()).digest()
    weights = [digest[i] + 1 for i in range(8)]
    total = sum(weights)
    milli = [w * 1000 // total for w in weights]
    milli[max(range(8), key=lambda i: weights[i])] += 1000 - sum(milli)
    return {l: m / 1000 for l, m in zip(LABELS, milli)}


def tiny_wav():
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(16000)
        w.writeframes(b"".join(struct.pack("<h", int(8000 * math.sin(i / 5))) for i in range(160)))
    return buf.getvalue()


def request(session, segment, modalities):
    return {"protocol_version": 1, "session_id": session, "segment_id": segment,
            "modalities": modalities}


def response(req, channels, latency):
    key = f"{req['session_id']}/{req['segment_id']}"
    return {"protocol_version": 1, "segment_id": req["segment_id"], "model_id": "stub-v1",
            "distributions": {c: stub_distribution(f"{key}/{c}") for c in channels},
            "latency_ms": latency}


CASES = [
    (request("interview-a", 0, {"text": {"content": "This is amazing, I love it"}}),
     ["text"], 3.5),
    (request("interview-a", 7, {
        "video": {"frames_uri": "file:///data/clips/interview-a/7/frames", "frame_count": 240, "fps": 24.0},
        "audio": {"wav_uri": "file:///data/clips/interview-a/7/audio.wav", "sample_rate": 16000}}),
     ["video", "audio"], 41.25),
    (request("interview-b", 12, {
        "video": {"frames_uri": "file:///data/clips/interview-b/12/frames", "frame_count": 240, "fps": 24.0},
        "audio": {"wav_uri": "file:///data/clips/interview-b/12/audio.wav", "sample_rate": 48000},
        "text": {"content": "I am worried the export will fail again."}}),
     ["audiovisual", "text"], 87.0),
    (request("phone-call", 3, {
        "audio": {"wav_base64": base64.b64encode(tiny_wav()).decode(), "sample_rate": 16000}}),
     ["audio"], 9.75),
    (request("interview-c", 47, {
        "video": {"frames_uri": "file:///data/clips/interview-c/47/frames", "frame_count": 120, "fps": 24.0}}),
     ["video"], 15.0),
]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for n, (req, channels, latency) in enumerate(CASES, start=1):
        for kind, doc in (("request", req), ("response", response(req, channels, latency))):
            text = json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
            (OUT / f"{n:02d}_{kind}.json").write_text(text)


if __name__ == "__main__":
    main()
