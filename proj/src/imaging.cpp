#include "groundslam/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "groundslam/error.hpp"

namespace groundslam {

Image::Image(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels),
      data_(static_cast<std::size_t>(width) * height * channels, fill) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3)) {
    throw Error(ErrorCode::kInvalidImage, "unsupported image shape");
  }
}

Image::Image(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3)) {
    throw Error(ErrorCode::kInvalidImage, "unsupported image shape");
  }
  if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw Error(ErrorCode::kInvalidImage, "pixel buffer length does not match dimensions");
  }
}

Image to_grayscale(const Image& rgb) {
  if (rgb.channels() != 3) {
    throw Error(ErrorCode::kInvalidImage, "grayscale conversion needs a 3-channel image");
  }
  Image gray(rgb.width(), rgb.height(), 1);
  const auto src = rgb.data();
  auto dst = gray.data();
  for (std::size_t i = 0; i < gray.pixel_count(); ++i) {
    const double luma = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    dst[i] = static_cast<std::uint8_t>(std::clamp(std::lround(luma), 0L, 255L));
  }
  return gray;
}

double IntensityDistribution::sum() const { return std::accumulate(bins.begin(), bins.end(), 0.0); }

void ChannelCounts::add(const Image& img, int channel) {
  if (channel < 0 || channel >= img.channels()) {
    throw Error(ErrorCode::kInvalidImage, "channel index out of range");
  }
  const auto data = img.data();
  const int stride = img.channels();
  for (std::size_t i = channel; i < data.size(); i += stride) ++counts[data[i]];
  total += img.pixel_count();
}

IntensityDistribution ChannelCounts::normalized() const {
  if (total == 0) throw Error(ErrorCode::kEmptyBaseline, "no pixels accumulated");
  IntensityDistribution d;
  const double inv = 1.0 / static_cast<double>(total);
  for (std::size_t i = 0; i < 256; ++i) d.bins[i] = static_cast<double>(counts[i]) * inv;
  return d;
}

IntensityDistribution channel_distribution(std::span<const Image> images, int channel) {
  if (images.empty()) throw Error(ErrorCode::kEmptyBaseline, "no images supplied");
  ChannelCounts counts;
  const int channels = images.front().channels();
  for (const Image& img : images) {
    if (img.channels() != channels) {
      throw Error(ErrorCode::kInvalidImage, "images disagree on channel count");
    }
    counts.add(img, channel);
  }
  return counts.normalized();
}

std::vector<IntensityDistribution> image_distributions(const Image& img) {
  std::vector<IntensityDistribution> out;
  out.reserve(img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    ChannelCounts counts;
    counts.add(img, c);
    out.push_back(counts.normalized());
  }
  return out;
}

double kld_channel(const IntensityDistribution& p, const IntensityDistribution& q, double epsilon) {
  double sum = 0.0;
  for (std::size_t i = 0; i < 256; ++i) {
    if (p.bins[i] == 0.0) continue;
    sum += p.bins[i] * std::log((p.bins[i] + epsilon) / (q.bins[i] + epsilon));
  }
  return sum;
}

double mean_channel_kld(std::span<const double> per_channel) {
  if (per_channel.empty()) throw Error(ErrorCode::kInvalidBaseline, "no channels");
  return std::accumulate(per_channel.begin(), per_channel.end(), 0.0) /
         static_cast<double>(per_channel.size());
}

double kld_score(const Image& img, std::span<const IntensityDistribution> baseline,
                 double epsilon) {
  if (baseline.size() != static_cast<std::size_t>(img.channels())) {
    throw Error(ErrorCode::kInvalidBaseline,
                "baseline has " + std::to_string(baseline.size()) + " channels, image has " +
                    std::to_string(img.channels()));
  }
  const auto dists = image_distributions(img);
  std::vector<double> per_channel(dists.size());
  for (std::size_t c = 0; c < dists.size(); ++c) {
    per_channel[c] = kld_channel(dists[c], baseline[c], epsilon);
  }
  return mean_channel_kld(per_channel);
}

JointHistogram joint_intensity_histogram(const Image& a, const Image& b) {
  if (a.channels() != 1 || b.channels() != 1) {
    throw Error(ErrorCode::kInvalidImage, "joint histogram needs single-channel images");
  }
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "joint histogram inputs differ in size");
  }
  JointHistogram h = JointHistogram::Zero(256, 256);
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) h(da[i], db[i]) += 1.0;
  return h;
}

double jih_symmetry_score(const Eigen::MatrixXd& h) {
  if (h.rows() != h.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "symmetry score needs a square matrix");
  }
  const double sym = (0.5 * (h + h.transpose())).norm();
  const double anti = (0.5 * (h - h.transpose())).norm();
  if (sym + anti == 0.0) return 1.0;
  return 0.5 * ((sym - anti) / (sym + anti) + 1.0);
}

}  // namespace groundslam
