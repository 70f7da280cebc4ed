#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/common.hpp"

namespace dar::metrics {

using synthcorpus::kMouthBoxHalfHeight;
using synthcorpus::kMouthBoxHalfWidth;

synthcorpus::Landmarks extract_mouth_landmarks(const torch::Tensor& frame,
                                               const synthcorpus::FaceIdentity& identity) {
  require(frame.dim() == 2, ErrorCode::InvalidArgument, "frame must be a 2-D image");
  torch::Tensor image = frame.to(torch::kFloat32).contiguous();
  const int height = static_cast<int>(image.size(0));
  const int width = static_cast<int>(image.size(1));
  const float* px = image.data_ptr<float>();
  const float threshold = static_cast<float>(0.5 * identity.skin_luminance);

  const int c_lo = std::max(0, static_cast<int>(std::ceil(identity.mouth_cx - kMouthBoxHalfWidth)));
  const int c_hi = std::min(width - 1, static_cast<int>(std::floor(identity.mouth_cx + kMouthBoxHalfWidth)));
  const int r_lo = std::max(0, static_cast<int>(std::ceil(identity.mouth_cy - kMouthBoxHalfHeight)));
  const int r_hi = std::min(height - 1, static_cast<int>(std::floor(identity.mouth_cy + kMouthBoxHalfHeight)));

  int min_c = width, max_c = -1, min_r = height, max_r = -1;
  double left_y = 0, right_y = 0, top_x = 0, bottom_x = 0;
  int left_n = 0, right_n = 0, top_n = 0, bottom_n = 0;

  for (int pass = 0; pass < 2; ++pass) {
    for (int r = r_lo; r <= r_hi; ++r) {
      for (int c = c_lo; c <= c_hi; ++c) {
        if (px[r * width + c] >= threshold) continue;
        if (pass == 0) {
          min_c = std::min(min_c, c);
          max_c = std::max(max_c, c);
          min_r = std::min(min_r, r);
          max_r = std::max(max_r, r);
        } else {
          if (c == min_c) { left_y += r; ++left_n; }
          if (c == max_c) { right_y += r; ++right_n; }
          if (r == min_r) { top_x += c; ++top_n; }
          if (r == max_r) { bottom_x += c; ++bottom_n; }
        }
      }
    }
    if (max_c < 0) break;  // no dark pixels
  }

  synthcorpus::Landmarks out;
  if (max_c < 0) {
    for (auto& p : out) p = {identity.mouth_cx, identity.mouth_cy};
    return out;
  }
  out[0] = {static_cast<double>(min_c), left_y / left_n};
  out[1] = {static_cast<double>(max_c), right_y / right_n};
  out[2] = {top_x / top_n, static_cast<double>(min_r)};
  out[3] = {bottom_x / bottom_n, static_cast<double>(max_r)};
  return out;
}

double lmd(const torch::Tensor& real_landmarks, const torch::Tensor& fake_landmarks) {
  require(real_landmarks.dim() == 3 && real_landmarks.size(2) == 2, ErrorCode::InvalidArgument,
          "landmarks must be [frames, landmarks, 2]");
  require(real_landmarks.sizes() == fake_landmarks.sizes(), ErrorCode::InvalidArgument,
          "landmark shapes differ between real and fake videos");
  torch::Tensor diff = (real_landmarks.to(torch::kFloat64) - fake_landmarks.to(torch::kFloat64));
  torch::Tensor dist = diff.square().sum(/*dim=*/2).sqrt();
  return dist.mean().item<double>();
}

double psnr(const torch::Tensor& a, const torch::Tensor& b, double max_value) {
  require(a.sizes() == b.sizes(), ErrorCode::InvalidArgument, "psnr inputs must share a shape");
  require(max_value > 0, ErrorCode::InvalidArgument, "max_value must be positive");
  double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).square().mean().item<double>();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / mse);
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  require(a.dim() == 2 && a.sizes() == b.sizes(), ErrorCode::InvalidArgument,
          "ssim inputs must be equal-shape 2-D images");
  constexpr int kWindow = 8;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;

  torch::Tensor x = a.to(torch::kFloat64);
  torch::Tensor y = b.to(torch::kFloat64);
  const std::int64_t rows = x.size(0), cols = x.size(1);
  require(rows >= kWindow && cols >= kWindow, ErrorCode::InvalidArgument,
          "image smaller than one SSIM window");

  double total = 0.0;
  std::int64_t windows = 0;
  for (std::int64_t r = 0; r + kWindow <= rows; r += kWindow) {
    for (std::int64_t c = 0; c + kWindow <= cols; c += kWindow) {
      torch::Tensor wx = x.slice(0, r, r + kWindow).slice(1, c, c + kWindow);
      torch::Tensor wy = y.slice(0, r, r + kWindow).slice(1, c, c + kWindow);
      double mx = wx.mean().item<double>();
      double my = wy.mean().item<double>();
      double vx = (wx - mx).square().mean().item<double>();
      double vy = (wy - my).square().mean().item<double>();
      double cov = ((wx - mx) * (wy - my)).mean().item<double>();
      double value = ((2 * mx * my + kC1) * (2 * cov + kC2)) /
                     ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      total += value;
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

}  // namespace dar::metrics
