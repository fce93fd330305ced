#pragma once

// 8-bit single-channel PNG read/write for Image ([0,1] floats).

#include <string>

#include "ocrprep/image.hpp"

namespace ocrprep {

void write_png_gray(const std::string& path, const Image& img);
Image read_png_gray(const std::string& path);

}  // namespace ocrprep
