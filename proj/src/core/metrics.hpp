#ifndef DAR_CORE_METRICS_HPP
#define DAR_CORE_METRICS_HPP

#include <torch/torch.h>

#include "core/synthcorpus.hpp"

namespace dar::metrics {

// Deterministic mouth-landmark extractor for toy faces: thresholds pixels
// darker than 0.5 * skin_luminance inside the identity's mouth bounding box.
// Landmarks are the leftmost/rightmost/topmost/bottommost dark-pixel centres;
// with no dark pixels all four sit at the box centre.
synthcorpus::Landmarks extract_mouth_landmarks(const torch::Tensor& frame,
                                               const synthcorpus::FaceIdentity& identity);

// Mean Euclidean distance over frames and landmarks. Inputs [F, L, 2].
double lmd(const torch::Tensor& real_landmarks, const torch::Tensor& fake_landmarks);

// 10*log10(max^2 / MSE); identical inputs yield +infinity.
double psnr(const torch::Tensor& a, const torch::Tensor& b, double max_value);

// Windowed SSIM: non-overlapping 8x8 windows, population moments,
// C1 = (0.01)^2, C2 = (0.03)^2, mean over windows. Inputs [H, W] in [0,1].
double ssim(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace dar::metrics

#endif
