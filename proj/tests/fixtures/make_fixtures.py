#!/usr/bin/env python3
"""Regenerates the binary EXIF fixtures and the 12-image sample corpus.

Writers: Pillow (both byte orders). Readback: exifread, a second library that
shares no code with Pillow or with capbias. The expected values stored in
expected.json come from exifread, never from the C++ parser under test.

Usage: python3 make_fixtures.py   (run from anywhere; writes next to itself)
"""

import io
import json
import random
import struct
from fractions import Fraction
from pathlib import Path

import exifread
from PIL import Image, TiffImagePlugin

HERE = Path(__file__).resolve().parent
EXIF_DIR = HERE / "exif"
CORPUS_DIR = HERE / "corpus12"

EXPOSURE_TIME = 0x829A
F_NUMBER = 0x829D
ISO_SPEED = 0x8827
EXIF_IFD = 0x8769


def make_exif(endian, exposure, fnumber, iso, make="TestCam"):
    ex = Image.Exif()
    ex.endian = endian
    ex[0x010F] = make
    sub = ex.get_ifd(EXIF_IFD)
    if exposure is not None:
        sub[EXPOSURE_TIME] = TiffImagePlugin.IFDRational(*exposure)
    if fnumber is not None:
        sub[F_NUMBER] = TiffImagePlugin.IFDRational(*fnumber)
    if iso is not None:
        sub[ISO_SPEED] = iso
    return ex


def tiff_payload(ex):
    blob = ex.tobytes()
    assert blob.startswith(b"Exif\x00\x00")
    return blob[6:]


def readback(data):
    tags = exifread.process_file(io.BytesIO(data), details=False)
    out = {}
    for name, key in (("ExposureTime", "EXIF ExposureTime"),
                      ("FNumber", "EXIF FNumber")):
        if key in tags:
            r = tags[key].values[0]
            out[name] = [r.num, r.den]
    if "EXIF ISOSpeedRatings" in tags:
        out["ISO"] = tags["EXIF ISOSpeedRatings"].values[0]
    out["Make"] = str(tags["Image Make"]) if "Image Make" in tags else None
    return out


def jpeg_with_exif(ex):
    buf = io.BytesIO()
    Image.new("RGB", (8, 8), (90, 120, 200)).save(buf, "JPEG", exif=ex)
    return buf.getvalue()


def write_parser_fixtures():
    EXIF_DIR.mkdir(parents=True, exist_ok=True)
    expected = {}

    le = tiff_payload(make_exif("<", (1, 60), (28, 5), 200))
    be = tiff_payload(make_exif(">", (1, 60), (28, 5), 200))
    assert le[:2] == b"II" and be[:2] == b"MM"
    (EXIF_DIR / "exif_le.tif").write_bytes(le)
    (EXIF_DIR / "exif_be.tif").write_bytes(be)
    expected["exif_le.tif"] = readback(le)
    expected["exif_be.tif"] = readback(be)

    ex = make_exif("<", (1, 60), (28, 5), 200)
    jpg = jpeg_with_exif(ex)
    (EXIF_DIR / "exif_app1.jpg").write_bytes(jpg)
    (EXIF_DIR / "exif_app1.payload").write_bytes(tiff_payload(ex))
    expected["exif_app1.jpg"] = readback(jpg)

    buf = io.BytesIO()
    Image.new("RGB", (8, 8)).save(buf, "JPEG")
    (EXIF_DIR / "jfif_only.jpg").write_bytes(buf.getvalue())

    # IFD0 offset far past the end of an 8-byte buffer.
    (EXIF_DIR / "truncated_ifd.tif").write_bytes(b"II*\x00" + struct.pack("<I", 0x1000))

    # IFD0 whose Exif pointer refers back to IFD0 itself.
    cyclic = b"II*\x00" + struct.pack("<I", 8)
    cyclic += struct.pack("<H", 1)
    cyclic += struct.pack("<HHII", EXIF_IFD, 4, 1, 8)
    cyclic += struct.pack("<I", 0)
    (EXIF_DIR / "cyclic_ifd.tif").write_bytes(cyclic)

    (EXIF_DIR / "expected.json").write_text(json.dumps(expected, indent=2, sort_keys=True) + "\n")

    # Round-trip set: random fully-populated records, both byte orders.
    rng = random.Random(20191027)
    cases = []
    for _ in range(64):
        exposure = (rng.randint(1, 30), rng.choice([1, 2, 4, 8, 10, 15, 30, 60, 125, 250, 500, 1000, 4000, 3, 7]))
        fnumber = (rng.randint(10, 220), rng.choice([1, 10, 3, 7]))
        iso = rng.randint(1, 65535)
        le = tiff_payload(make_exif("<", exposure, fnumber, iso))
        be = tiff_payload(make_exif(">", exposure, fnumber, iso))
        for blob in (le, be):
            rb = readback(blob)
            assert Fraction(*rb["ExposureTime"]) == Fraction(*exposure)
            assert Fraction(*rb["FNumber"]) == Fraction(*fnumber)
            assert rb["ISO"] == iso
        cases.append({"exposure": list(exposure), "fnumber": list(fnumber), "iso": iso,
                      "le_hex": le.hex(), "be_hex": be.hex()})
    (EXIF_DIR / "roundtrip.json").write_text(json.dumps(cases, indent=1) + "\n")


# (exposure, fnumber, iso); None marks an absent tag.
CORPUS = [
    ("img01", (1, 60), (28, 5), 100),
    ("img02", (1, 125), (8, 1), 200),
    ("img03", (1, 30), (14, 5), 400),
    ("img04", (1, 250), (11, 1), 100),
    ("img05", (1, 15), (4, 1), 800),
    ("img06", (1, 5), (14, 5), 1600),
    ("img07", (1, 8), (2, 1), 100),
    ("img08", (1, 100), (14, 5), 200),
    ("img09", (1, 2), (9, 5), 3200),
    ("img10", (2, 1), (8, 1), 12800),
    ("img11", (1, 500), (28, 5), 64),
    ("img12", (1, 60), None, None),
]
EMBEDDED = {"img01", "img02", "img03", "img04", "img05", "img06", "img07", "img08"}


def fraction_text(pair):
    return f"{pair[0]}/{pair[1]}"


def write_corpus():
    images_dir = CORPUS_DIR / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    sidecar = []
    images = []
    for idx, (name, exposure, fnumber, iso) in enumerate(CORPUS, start=1):
        images.append({"id": idx, "file_name": f"{name}.jpg"})
        if name in EMBEDDED:
            endian = "<" if idx % 2 else ">"
            (images_dir / f"{name}.jpg").write_bytes(jpeg_with_exif(make_exif(endian, exposure, fnumber, iso)))
        else:
            entry = {"id": str(idx)}
            if exposure is not None:
                entry["ExposureTime"] = fraction_text(exposure) if exposure[1] != 1 else str(exposure[0])
            if fnumber is not None:
                entry["FNumber"] = str(fnumber[0] / fnumber[1])
            if iso is not None:
                entry["ISO"] = str(iso)
            sidecar.append(entry)

    categories = [{"id": 1, "name": "person"}, {"id": 2, "name": "car"}, {"id": 3, "name": "dog, small"}]
    annotations = []
    detections = []
    ann_id = 1
    for img in images:
        i = img["id"]
        cat = 1 + (i % 3)
        box = [10.0 * i, 20.0, 40.0, 30.0]
        annotations.append({"id": ann_id, "image_id": i, "category_id": cat, "bbox": box})
        ann_id += 1
        # Near-perfect hit for most images, a shifted miss for every fourth.
        shift = 30.0 if i % 4 == 0 else 2.0
        detections.append({"image_id": i, "category_id": cat,
                           "bbox": [box[0] + shift, box[1], box[2], box[3]],
                           "score": round(0.95 - 0.05 * i, 2)})
        detections.append({"image_id": i, "category_id": 1 + ((i + 1) % 3),
                           "bbox": [200.0, 200.0, 10.0, 10.0], "score": round(0.3 + 0.02 * i, 2)})
        if i % 3 == 0:
            annotations.append({"id": ann_id, "image_id": i, "category_id": 2, "bbox": [300.0, 40.0, 25.0, 25.0]})
            ann_id += 1

    (CORPUS_DIR / "annotations.json").write_text(json.dumps(
        {"images": images, "annotations": annotations, "categories": categories}, indent=1) + "\n")
    (CORPUS_DIR / "detections.json").write_text(json.dumps(detections, indent=1) + "\n")
    (CORPUS_DIR / "sidecar.json").write_text(json.dumps(sidecar, indent=1) + "\n")


if __name__ == "__main__":
    write_parser_fixtures()
    write_corpus()
