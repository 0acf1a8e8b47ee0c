#pragma once

#include <filesystem>

#include "srres/image.hpp"

namespace srres {

/// Reads an 8- or 16-bit PNG. Gray images load as one channel, everything
/// else as RGB; alpha is dropped. Intensities are divided by the bit-depth
/// maximum.
Image load_png(const std::filesystem::path& path);

/// Writes an 8-bit PNG (gray for one channel, RGB for three). Values are
/// clamped to [0,1] and rounded to the nearest code.
void save_png(const Image& img, const std::filesystem::path& path);

}  // namespace srres
