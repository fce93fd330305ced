#include "ocrprep/glyphs.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace ocrprep::blackbox {

namespace {

// Rows are 5-bit patterns, MSB = leftmost pixel.
struct FontGlyph {
    char32_t c;
    std::array<std::uint8_t, 7> rows;
};

constexpr FontGlyph kFont[] = {
    {U'A', {0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001}},
    {U'B', {0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110}},
    {U'C', {0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110}},
    {U'D', {0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110}},
    {U'E', {0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111}},
    {U'F', {0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000}},
    {U'G', {0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111}},
    {U'H', {0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001}},
    {U'I', {0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    {U'J', {0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100}},
    {U'K', {0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001}},
    {U'L', {0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111}},
    {U'M', {0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001}},
    {U'N', {0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001}},
    {U'O', {0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110}},
    {U'P', {0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000}},
    {U'Q', {0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101}},
    {U'R', {0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001}},
    {U'S', {0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110}},
    {U'T', {0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100}},
    {U'U', {0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110}},
    {U'V', {0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100}},
    {U'W', {0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010}},
    {U'X', {0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001}},
    {U'Y', {0b10001, 0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100}},
    {U'Z', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111}},
    {U'0', {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110}},
    {U'1', {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    {U'2', {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111}},
    {U'3', {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110}},
    {U'4', {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010}},
    {U'5', {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110}},
    {U'6', {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110}},
    {U'7', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000}},
    {U'8', {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110}},
    {U'9', {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100}},
};

GlyphBitmap build_glyph(const FontGlyph& fg, int scale, bool bold) {
    // tight horizontal crop of the 5x7 pattern
    int x0 = 5, x1 = -1;
    for (int x = 0; x < 5; ++x)
        for (int y = 0; y < 7; ++y)
            if (fg.rows[y] & (1 << (4 - x))) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
    const int bw = x1 - x0 + 1;
    GlyphBitmap g;
    g.width = bw * scale;
    g.height = 7 * scale;
    g.ink.assign(static_cast<std::size_t>(g.width) * g.height, 0);
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < bw; ++x)
            if (fg.rows[y] & (1 << (4 - (x0 + x))))
                for (int dy = 0; dy < scale; ++dy)
                    for (int dx = 0; dx < scale; ++dx)
                        g.ink[static_cast<std::size_t>(y * scale + dy) * g.width + x * scale + dx] = 1;
    if (!bold) return g;
    // 4-neighbourhood dilation inside a one-pixel border
    GlyphBitmap d;
    d.width = g.width + 2;
    d.height = g.height + 2;
    d.ink.assign(static_cast<std::size_t>(d.width) * d.height, 0);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            if (g.at(x, y)) {
                const int cx = x + 1, cy = y + 1;
                d.ink[static_cast<std::size_t>(cy) * d.width + cx] = 1;
                d.ink[static_cast<std::size_t>(cy - 1) * d.width + cx] = 1;
                d.ink[static_cast<std::size_t>(cy + 1) * d.width + cx] = 1;
                d.ink[static_cast<std::size_t>(cy) * d.width + cx - 1] = 1;
                d.ink[static_cast<std::size_t>(cy) * d.width + cx + 1] = 1;
            }
    return d;
}

}  // namespace

GlyphAtlas::GlyphAtlas(int scale, bool bold) : scale_(scale), bold_(bold) {
    for (const auto& fg : kFont) {
        charset_.push_back(fg.c);
        glyphs_.push_back(build_glyph(fg, scale, bold));
    }
}

GlyphAtlas GlyphAtlas::engine_a() { return GlyphAtlas(3, false); }
GlyphAtlas GlyphAtlas::engine_b() { return GlyphAtlas(3, true); }

bool GlyphAtlas::has(char32_t c) const { return charset_.find(c) != std::u32string::npos; }

const GlyphBitmap& GlyphAtlas::glyph(char32_t c) const {
    const auto pos = charset_.find(c);
    if (pos == std::u32string::npos)
        throw std::invalid_argument("GlyphAtlas: no glyph for code point " +
                                    std::to_string(static_cast<std::uint32_t>(c)));
    return glyphs_[pos];
}

}  // namespace ocrprep::blackbox
