#pragma once

// Grayscale raster with values in [0,1]; the unit flowing through the pipeline.

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocrprep {

struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> px;  // row-major, height*width values in [0,1]

    Image() = default;
    Image(int w, int h, float fill = 1.0f)
        : width(w), height(h), px(static_cast<std::size_t>(w) * h, fill) {}

    float& at(int x, int y) { return px[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return px[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return px.size(); }
};

inline void clamp01(Image& img) {
    for (float& v : img.px) v = std::clamp(v, 0.0f, 1.0f);
}

// Pad to target size, content anchored at the left edge and vertically
// centered, remainder filled with `fill` (white background by default).
inline Image pad_to(const Image& img, int width, int height, float fill = 1.0f) {
    if (img.width > width || img.height > height)
        throw std::invalid_argument("pad_to: image " + std::to_string(img.width) + "x" +
                                    std::to_string(img.height) + " exceeds target " +
                                    std::to_string(width) + "x" + std::to_string(height));
    if (img.width == width && img.height == height) return img;
    Image out(width, height, fill);
    const int y0 = (height - img.height) / 2;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(x, y0 + y) = img.at(x, y);
    return out;
}

inline Image crop(const Image& img, int x0, int y0, int w, int h) {
    if (x0 < 0 || y0 < 0 || x0 + w > img.width || y0 + h > img.height)
        throw std::invalid_argument("crop: region out of bounds");
    Image out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
    return out;
}

}  // namespace ocrprep
