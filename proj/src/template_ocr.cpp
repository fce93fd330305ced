#include <algorithm>
#include <cmath>
#include <vector>

#include "ocrprep/blackbox.hpp"
#include "ocrprep/vocab.hpp"

namespace ocrprep::blackbox {

namespace {

// NCC between a binary segment (resized to the template grid with nearest
// neighbour) and a binary template. Degenerate (constant) inputs score 0.
float ncc_score(const std::vector<std::uint8_t>& seg, int sw, int sh, const GlyphBitmap& tpl) {
    const int n = tpl.width * tpl.height;
    double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
    for (int y = 0; y < tpl.height; ++y)
        for (int x = 0; x < tpl.width; ++x) {
            const int sx = std::min(sw - 1, x * sw / tpl.width);
            const int sy = std::min(sh - 1, y * sh / tpl.height);
            const double a = seg[static_cast<std::size_t>(sy) * sw + sx];
            const double b = tpl.at(x, y) ? 1.0 : 0.0;
            sa += a;
            sb += b;
            sab += a * b;
            saa += a * a;
            sbb += b * b;
        }
    const double cov = n * sab - sa * sb;
    const double va = n * saa - sa * sa;
    const double vb = n * sbb - sb * sb;
    if (va <= 0 || vb <= 0) return 0.0f;
    return static_cast<float>(cov / std::sqrt(va * vb));
}

}  // namespace

TemplateRecognizer::TemplateRecognizer(GlyphAtlas atlas, float binarize_threshold,
                                       float match_threshold, std::string id, int min_column_ink)
    : atlas_(std::move(atlas)),
      binarize_(binarize_threshold),
      tau_(match_threshold),
      id_(std::move(id)),
      min_column_ink_(min_column_ink) {}

std::shared_ptr<TemplateRecognizer> TemplateRecognizer::engine_a() {
    return std::make_shared<TemplateRecognizer>(GlyphAtlas::engine_a(), 0.5f, 0.6f, "template-a");
}

std::shared_ptr<TemplateRecognizer> TemplateRecognizer::engine_b() {
    // The tighter 0.35 binarization only keeps dark stroke cores, so engine B
    // needs a permissive match threshold and single-pixel columns to produce
    // non-empty (if often wrong) readings on degraded input.
    return std::make_shared<TemplateRecognizer>(GlyphAtlas::engine_b(), 0.35f, 0.25f, "template-b",
                                                1);
}

RecognizerCapabilities TemplateRecognizer::capabilities() const {
    return {.concurrent_calls_safe = true, .max_width = 0, .max_height = 0, .deterministic = true};
}

std::string TemplateRecognizer::recognize(const Image& image) const {
    const int W = image.width, H = image.height;
    // binarize: ink = darker than threshold
    std::vector<std::uint8_t> ink(static_cast<std::size_t>(W) * H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            ink[static_cast<std::size_t>(y) * W + x] = image.at(x, y) < binarize_ ? 1 : 0;

    std::vector<int> col_ink(W, 0);
    for (int x = 0; x < W; ++x)
        for (int y = 0; y < H; ++y) col_ink[x] += ink[static_cast<std::size_t>(y) * W + x];

    std::u32string out;
    int x = 0;
    while (x < W) {
        while (x < W && col_ink[x] < min_column_ink_) ++x;
        if (x >= W) break;
        int x1 = x;
        while (x1 < W && col_ink[x1] >= min_column_ink_) ++x1;
        // tight row bounds of the segment
        int y0 = H, y1 = -1;
        for (int y = 0; y < H; ++y)
            for (int sx = x; sx < x1; ++sx)
                if (ink[static_cast<std::size_t>(y) * W + sx]) {
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                }
        if (y1 >= y0) {
            const int sw = x1 - x, sh = y1 - y0 + 1;
            std::vector<std::uint8_t> seg(static_cast<std::size_t>(sw) * sh);
            for (int y = 0; y < sh; ++y)
                for (int sx = 0; sx < sw; ++sx)
                    seg[static_cast<std::size_t>(y) * sw + sx] =
                        ink[static_cast<std::size_t>(y0 + y) * W + x + sx];
            float best = -2.0f;
            char32_t best_c = 0;
            for (char32_t c : atlas_.charset()) {
                const float s = ncc_score(seg, sw, sh, atlas_.glyph(c));
                if (s > best) {
                    best = s;
                    best_c = c;
                }
            }
            if (best >= tau_) out.push_back(best_c);  // below threshold: dropped
        }
        x = x1;
    }
    return losses::utf8_encode(out);
}

}  // namespace ocrprep::blackbox
