#pragma once

// Embedded 5x7 bitmap font (A-Z, 0-9) scaled up into glyph bitmaps. The same
// atlas feeds the synthetic word renderer and the template recognizer, which
// is what makes clean-image recognition exact by construction.

#include <cstdint>
#include <string>
#include <vector>

namespace ocrprep::blackbox {

struct GlyphBitmap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> ink;  // row-major, 1 = ink

    bool at(int x, int y) const { return ink[static_cast<std::size_t>(y) * width + x] != 0; }
};

class GlyphAtlas {
public:
    GlyphAtlas(int scale, bool bold);

    static GlyphAtlas engine_a();  // scale 3, plain strokes
    static GlyphAtlas engine_b();  // scale 3, bold (1px dilation)

    bool has(char32_t c) const;
    // Tight glyph bitmap (no empty border rows/columns before scaling).
    const GlyphBitmap& glyph(char32_t c) const;
    const std::u32string& charset() const { return charset_; }
    int scale() const { return scale_; }
    bool bold() const { return bold_; }

private:
    int scale_;
    bool bold_;
    std::u32string charset_;
    std::vector<GlyphBitmap> glyphs_;
};

}  // namespace ocrprep::blackbox
