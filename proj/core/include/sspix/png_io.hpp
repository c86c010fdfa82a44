#pragma once

#include <string>

#include "sspix/image.hpp"

namespace sspix {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ImageU8 read_png_rgb8(const std::string& path);
void write_png_rgb8(const std::string& path, const ImageU8& img);

// label maps travel as single-channel 16-bit PNGs
LabelMap read_png_label16(const std::string& path);
void write_png_label16(const std::string& path, const LabelMap& labels);

void write_png_gray8(const std::string& path, const std::vector<std::uint8_t>& gray, int h, int w);

}  // namespace sspix
