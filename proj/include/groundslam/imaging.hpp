#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace groundslam {

/// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, std::uint8_t fill = 0);
  Image(int width, int height, int channels, std::vector<std::uint8_t> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  std::uint8_t at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  std::uint8_t& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<const std::uint8_t> data() const { return data_; }
  std::span<std::uint8_t> data() { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

/// BT.601 luma, rounded to nearest.
Image to_grayscale(const Image& rgb);

/// Normalized 256-bin intensity histogram of one channel.
struct IntensityDistribution {
  std::array<double, 256> bins{};

  double sum() const;
  friend bool operator==(const IntensityDistribution&, const IntensityDistribution&) = default;
};

/// Raw per-channel intensity counts; summing counts and normalising once
/// gives the same distribution as pooling all pixels of all images.
struct ChannelCounts {
  std::array<std::uint64_t, 256> counts{};
  std::uint64_t total = 0;

  void add(const Image& img, int channel);
  IntensityDistribution normalized() const;
};

IntensityDistribution channel_distribution(std::span<const Image> images, int channel);

/// One distribution per channel of `img`.
std::vector<IntensityDistribution> image_distributions(const Image& img);

inline constexpr double kDefaultEpsilon = 1e-10;

/// sum_i p_i log((p_i + eps) / (q_i + eps)), natural log.
double kld_channel(const IntensityDistribution& p, const IntensityDistribution& q,
                   double epsilon = kDefaultEpsilon);

/// Mean of the per-channel divergences of `img` against `baseline`
/// (a single channel for grayscale images).
double kld_score(const Image& img, std::span<const IntensityDistribution> baseline,
                 double epsilon = kDefaultEpsilon);

double mean_channel_kld(std::span<const double> per_channel);

/// counts(i, j) = number of pixel locations with a == i and b == j.
using JointHistogram = Eigen::MatrixXd;

JointHistogram joint_intensity_histogram(const Image& a, const Image& b);

/// 1/2 ((|S| - |A|) / (|S| + |A|) + 1) with S, A the symmetric and
/// antisymmetric parts of `h` and |.| the Frobenius norm. An all-zero
/// matrix scores 1.
double jih_symmetry_score(const Eigen::MatrixXd& h);

}  // namespace groundslam
