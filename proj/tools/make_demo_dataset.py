#!/usr/bin/env python3
"""Writes a tiny demo dataset (manifest + PNG screenshots) into the given directory."""
import json, os, struct, zlib, sys
root = sys.argv[1]
os.makedirs(f"{root}/images", exist_ok=True)
def png(seed):
    w = h = 8
    raw = b"".join(b"\x00" + bytes(((seed * 37 + x * 11 + y * 5) % 256 for x in range(w * 3))) for y in range(h))
    def chunk(t, d): return struct.pack(">I", len(d)) + t + d + struct.pack(">I", zlib.crc32(t + d))
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)) + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b"")
guis = []
for i in range(12):
    p = f"gui_{i:03d}.png"
    open(f"{root}/images/{p}", "wb").write(png(i))
    guis.append({"gui_id": f"gui_{i:03d}", "image_path": p})
json.dump({"name": "demo", "image_dir": "images", "guis": guis}, open(f"{root}/demo.json", "w"), indent=2)
