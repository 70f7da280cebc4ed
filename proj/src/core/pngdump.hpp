#ifndef DAR_CORE_PNGDUMP_HPP
#define DAR_CORE_PNGDUMP_HPP

#include <torch/torch.h>

#include <filesystem>

namespace dar {

// 8-bit grayscale PNG from a [H, W] float image in [0,1].
void write_png_gray(const std::filesystem::path& path, const torch::Tensor& image);

}  // namespace dar

#endif
