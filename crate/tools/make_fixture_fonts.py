#!/usr/bin/env python3
"""Build the small CJK fixture fonts under assets/fonts/.

Each output is a TrueType subset holding only the first N characters of
crates/core/data/common_chars.txt, re-outlined as quadratic glyf contours.
Inputs are the upstream OFL / IPA licensed releases, either as whole OTF files
or as the chunked webfont distributions published on npm.

    python3 tools/make_fixture_fonts.py --count 300 --out assets/fonts \
        hei=NotoSansCJKsc-Regular.otf song=NotoSerifCJKsc-Regular.otf \
        kai=lxgw/files/lxgwwenkai-regular-subset-*.woff2 ...
"""
import argparse
import glob
import os

from fontTools.fontBuilder import FontBuilder
from fontTools.pens.cu2quPen import Cu2QuPen
from fontTools.pens.ttGlyphPen import TTGlyphPen
from fontTools.ttLib import TTFont


def load_sources(pattern):
    fonts = []
    for path in sorted(glob.glob(pattern)):
        fonts.append(TTFont(path))
    if not fonts:
        raise SystemExit(f"no font files match {pattern}")
    return fonts


def build(family, pattern, chars, out_dir):
    sources = load_sources(pattern)
    upem = sources[0]["head"].unitsPerEm
    glyph_order = [".notdef"]
    glyphs = {}
    metrics = {}
    cmap = {}

    notdef = TTGlyphPen(None)
    glyphs[".notdef"] = notdef.glyph()
    metrics[".notdef"] = (upem, 0)

    for ch in chars:
        cp = ord(ch)
        for font in sources:
            name = font.getBestCmap().get(cp)
            if name is None:
                continue
            gs = font.getGlyphSet()
            pen = TTGlyphPen(None)
            gs[name].draw(Cu2QuPen(pen, max_err=upem / 1000.0, reverse_direction=True)
                          if "CFF " in font or "CFF2" in font else pen)
            gname = f"uni{cp:04X}"
            glyphs[gname] = pen.glyph()
            adv = font["hmtx"][name][0]
            metrics[gname] = (adv, 0)
            glyph_order.append(gname)
            cmap[cp] = gname
            break

    fb = FontBuilder(upem, isTTF=True)
    fb.setupGlyphOrder(glyph_order)
    fb.setupCharacterMap(cmap)
    fb.setupGlyf(glyphs)
    for gname, (adv, _) in metrics.items():
        bounds = getattr(glyphs[gname], "xMin", 0)
        metrics[gname] = (adv, bounds)
    fb.setupHorizontalMetrics(metrics)
    fb.setupHorizontalHeader(ascent=int(upem * 0.88), descent=-int(upem * 0.12))
    fb.setupNameTable({"familyName": f"GlyphForge Fixture {family}", "styleName": "Regular"})
    fb.setupOS2(sTypoAscender=int(upem * 0.88), sTypoDescender=-int(upem * 0.12),
                usWinAscent=int(upem * 0.88), usWinDescent=int(upem * 0.12))
    fb.setupPost()
    out = os.path.join(out_dir, f"{family}.ttf")
    fb.save(out)
    print(f"{out}: {len(cmap)} glyphs, {os.path.getsize(out)} bytes")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=300)
    ap.add_argument("--charset", default="crates/core/data/common_chars.txt")
    ap.add_argument("--out", default="assets/fonts")
    ap.add_argument("--extra", default="永\u3000",
                    help="characters appended after the frequency prefix (U+3000 is a blank glyph)")
    ap.add_argument("fonts", nargs="+", help="family=glob")
    args = ap.parse_args()
    with open(args.charset, encoding="utf-8") as fh:
        chars = [c for c in fh.read() if not c.isspace()][: args.count]
    chars += [c for c in args.extra if c not in chars]
    os.makedirs(args.out, exist_ok=True)
    for spec in args.fonts:
        family, pattern = spec.split("=", 1)
        build(family, pattern, chars, args.out)


if __name__ == "__main__":
    main()
