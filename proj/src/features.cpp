#include "groundslam/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "groundslam/error.hpp"

namespace groundslam {

int hamming(const Descriptor& a, const Descriptor& b) {
  return std::popcount(a.bits[0] ^ b.bits[0]) + std::popcount(a.bits[1] ^ b.bits[1]) +
         std::popcount(a.bits[2] ^ b.bits[2]) + std::popcount(a.bits[3] ^ b.bits[3]);
}

namespace {

struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

  float clamped(int x, int y) const {
    return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
  }

  float bilinear(double x, double y) const {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const double ax = x - fx;
    const double ay = y - fy;
    const double top = (1.0 - ax) * clamped(x0, y0) + ax * clamped(x0 + 1, y0);
    const double bottom = (1.0 - ax) * clamped(x0, y0 + 1) + ax * clamped(x0 + 1, y0 + 1);
    return static_cast<float>((1.0 - ay) * top + ay * bottom);
  }
};

FloatImage to_float(const Image& gray) {
  FloatImage out{gray.width(), gray.height(), {}};
  out.data.assign(gray.data().begin(), gray.data().end());
  return out;
}

std::vector<float> gaussian_kernel(double sigma, int radius) {
  std::vector<float> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[i + radius] = static_cast<float>(v);
    sum += v;
  }
  for (float& v : k) v = static_cast<float>(v / sum);
  return k;
}

FloatImage separable_blur(const FloatImage& in, const std::vector<float>& kernel) {
  const int r = static_cast<int>(kernel.size() / 2);
  FloatImage tmp{in.width, in.height, std::vector<float>(in.data.size())};
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      float acc = 0.0F;
      for (int i = -r; i <= r; ++i) acc += kernel[i + r] * in.clamped(x + i, y);
      tmp.at(x, y) = acc;
    }
  }
  FloatImage out{in.width, in.height, std::vector<float>(in.data.size())};
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      float acc = 0.0F;
      for (int i = -r; i <= r; ++i) acc += kernel[i + r] * tmp.clamped(x, y + i);
      out.at(x, y) = acc;
    }
  }
  return out;
}

FloatImage harris_response(const FloatImage& img, double k) {
  const int w = img.width;
  const int h = img.height;
  FloatImage ixx{w, h, std::vector<float>(img.data.size())};
  FloatImage iyy = ixx;
  FloatImage ixy = ixx;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float gx = (img.clamped(x + 1, y - 1) + 2.0F * img.clamped(x + 1, y) +
                        img.clamped(x + 1, y + 1) - img.clamped(x - 1, y - 1) -
                        2.0F * img.clamped(x - 1, y) - img.clamped(x - 1, y + 1)) /
                       8.0F;
      const float gy = (img.clamped(x - 1, y + 1) + 2.0F * img.clamped(x, y + 1) +
                        img.clamped(x + 1, y + 1) - img.clamped(x - 1, y - 1) -
                        2.0F * img.clamped(x, y - 1) - img.clamped(x + 1, y - 1)) /
                       8.0F;
      ixx.at(x, y) = gx * gx;
      iyy.at(x, y) = gy * gy;
      ixy.at(x, y) = gx * gy;
    }
  }
  const auto window = gaussian_kernel(1.5, 3);
  ixx = separable_blur(ixx, window);
  iyy = separable_blur(iyy, window);
  ixy = separable_blur(ixy, window);
  FloatImage r{w, h, std::vector<float>(img.data.size())};
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    const double a = ixx.data[i];
    const double b = iyy.data[i];
    const double c = ixy.data[i];
    r.data[i] = static_cast<float>(a * b - c * c - k * (a + b) * (a + b));
  }
  return r;
}

// Bresenham circle of radius 3 used by FAST.
constexpr std::array<std::array<int, 2>, 16> kCircle = {{{0, -3}, {1, -3}, {2, -2}, {3, -1},
                                                         {3, 0}, {3, 1}, {2, 2}, {1, 3},
                                                         {0, 3}, {-1, 3}, {-2, 2}, {-3, 1},
                                                         {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}}};

bool passes_contrast_test(const Image& gray, int x, int y, int threshold, int min_pixels) {
  const int centre = gray.at(x, y);
  int brighter = 0;
  int darker = 0;
  for (const auto& [dx, dy] : kCircle) {
    const int v = gray.at(x + dx, y + dy);
    if (v > centre + threshold) ++brighter;
    else if (v < centre - threshold) ++darker;
  }
  return brighter >= min_pixels || darker >= min_pixels;
}

double parabolic_offset(double left, double centre, double right) {
  const double denom = left - 2.0 * centre + right;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

constexpr int kOrientationRadius = 15;

double intensity_centroid_angle(const FloatImage& img, double px, double py) {
  const int cx = static_cast<int>(std::lround(px));
  const int cy = static_cast<int>(std::lround(py));
  double m10 = 0.0;
  double m01 = 0.0;
  for (int dy = -kOrientationRadius; dy <= kOrientationRadius; ++dy) {
    for (int dx = -kOrientationRadius; dx <= kOrientationRadius; ++dx) {
      if (dx * dx + dy * dy > kOrientationRadius * kOrientationRadius) continue;
      const double v = img.clamped(cx + dx, cy + dy);
      m10 += dx * v;
      m01 += dy * v;
    }
  }
  return std::atan2(m01, m10);
}

std::array<std::array<float, 4>, 256> make_pattern() {
  // Isotropic Gaussian pairs (sigma = patch/5), clipped to the patch.
  std::mt19937 rng(0x6a09e667U);
  auto uniform = [&rng]() { return (static_cast<double>(rng()) + 0.5) / 4294967296.0; };
  auto gaussian = [&]() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  };
  constexpr double kSigma = 31.0 / 5.0;
  constexpr double kLimit = 13.0;
  std::array<std::array<float, 4>, 256> pattern{};
  for (auto& pair : pattern) {
    do {
      for (float& v : pair) {
        v = static_cast<float>(std::clamp(std::round(gaussian() * kSigma), -kLimit, kLimit));
      }
    } while (pair[0] == pair[2] && pair[1] == pair[3]);
  }
  return pattern;
}

Descriptor describe(const FloatImage& smooth, const Keypoint& kp) {
  const auto& pattern = descriptor_pattern();
  const double c = std::cos(kp.orientation);
  const double s = std::sin(kp.orientation);
  Descriptor d;
  for (int i = 0; i < 256; ++i) {
    const auto& p = pattern[i];
    const double ax = kp.px + c * p[0] - s * p[1];
    const double ay = kp.py + s * p[0] + c * p[1];
    const double bx = kp.px + c * p[2] - s * p[3];
    const double by = kp.py + s * p[2] + c * p[3];
    if (smooth.bilinear(ax, ay) < smooth.bilinear(bx, by)) d.set(i);
  }
  return d;
}

}  // namespace

const std::array<std::array<float, 4>, 256>& descriptor_pattern() {
  static const auto pattern = make_pattern();
  return pattern;
}

Features detect_and_describe(const Image& gray, int max_keypoints, const DetectorOptions& options) {
  if (gray.channels() != 1) {
    throw Error(ErrorCode::kInvalidImage, "feature detection needs a grayscale image");
  }
  if (gray.width() < 32 || gray.height() < 32) {
    throw Error(ErrorCode::kInvalidImage, "image smaller than 32x32");
  }
  Features out;
  if (max_keypoints <= 0) return out;

  const FloatImage raw = to_float(gray);
  const FloatImage response = harris_response(raw, options.harris_k);
  const int border = std::max(options.border, 4);

  struct Candidate {
    int x;
    int y;
    float r;
  };
  std::vector<Candidate> candidates;
  for (int y = border; y < gray.height() - border; ++y) {
    for (int x = border; x < gray.width() - border; ++x) {
      const float r = response.at(x, y);
      if (!(r > 0.0F)) continue;
      // 3x3 non-maximum suppression; ties resolved toward the earlier pixel.
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const float n = response.at(x + dx, y + dy);
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (n > r || (earlier && n == r)) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;
      if (!passes_contrast_test(gray, x, y, options.contrast_threshold,
                                options.min_contrast_pixels)) {
        continue;
      }
      candidates.push_back({x, y, r});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.r > b.r; });
  if (candidates.size() > static_cast<std::size_t>(max_keypoints)) {
    candidates.resize(static_cast<std::size_t>(max_keypoints));
  }

  const FloatImage smooth = separable_blur(raw, gaussian_kernel(2.0, 4));
  out.keypoints.reserve(candidates.size());
  out.descriptors.reserve(candidates.size());
  for (const Candidate& c : candidates) {
    Keypoint kp;
    kp.px = c.x + parabolic_offset(response.at(c.x - 1, c.y), c.r, response.at(c.x + 1, c.y));
    kp.py = c.y + parabolic_offset(response.at(c.x, c.y - 1), c.r, response.at(c.x, c.y + 1));
    kp.response = c.r;
    kp.orientation = intensity_centroid_angle(raw, kp.px, kp.py);
    out.keypoints.push_back(kp);
    out.descriptors.push_back(describe(smooth, kp));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Nearest {
  int best_index = -1;
  int best = std::numeric_limits<int>::max();
  int second = std::numeric_limits<int>::max();
};

void offer(Nearest& n, int d, int index) {
  if (d < n.best) {
    n.second = n.best;
    n.best = d;
    n.best_index = index;
  } else if (d < n.second) {
    n.second = d;
  }
}

// Nearest and second-nearest in both directions from one pass over all pairs.
std::pair<std::vector<Nearest>, std::vector<Nearest>> nearest_neighbours(
    std::span<const Descriptor> a, std::span<const Descriptor> b) {
  std::vector<Nearest> ab(a.size());
  std::vector<Nearest> ba(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const int d = hamming(a[i], b[j]);
      offer(ab[i], d, static_cast<int>(j));
      offer(ba[j], d, static_cast<int>(i));
    }
  }
  return {std::move(ab), std::move(ba)};
}

bool passes_ratio(const Nearest& n, double ratio) {
  if (n.second == std::numeric_limits<int>::max()) return true;
  return static_cast<double>(n.best) < ratio * static_cast<double>(n.second);
}

}  // namespace

std::vector<Match> match_descriptors(std::span<const Descriptor> a, std::span<const Descriptor> b,
                                     const MatcherOptions& options) {
  std::vector<Match> matches;
  if (a.empty() || b.empty()) return matches;
  const auto [ab, ba] = nearest_neighbours(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Nearest& fwd = ab[i];
    if (fwd.best_index < 0 || fwd.best > options.max_distance) continue;
    const Nearest& bwd = ba[static_cast<std::size_t>(fwd.best_index)];
    if (bwd.best_index != static_cast<int>(i)) continue;
    if (!passes_ratio(fwd, options.ratio) || !passes_ratio(bwd, options.ratio)) continue;
    matches.push_back({static_cast<int>(i), fwd.best_index, fwd.best});
  }
  return matches;
}

// ---------------------------------------------------------------------------

double bow_similarity(const BowVector& a, const BowVector& b) {
  if (a.vocabulary_id() != b.vocabulary_id()) {
    throw Error(ErrorCode::kInvalidComparison, "BoW vectors come from different vocabularies");
  }
  const auto& ea = a.entries();
  const auto& eb = b.entries();
  double dot = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < ea.size() && j < eb.size()) {
    if (ea[i].first < eb[j].first) {
      ++i;
    } else if (eb[j].first < ea[i].first) {
      ++j;
    } else {
      dot += ea[i].second * eb[j].second;
      ++i;
      ++j;
    }
  }
  return std::clamp(dot, 0.0, 1.0);
}

namespace {

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
std::span<const std::uint8_t> as_bytes_of(const std::vector<T>& v) {
  return {reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * sizeof(T)};
}

}  // namespace

Vocabulary::Vocabulary(std::vector<Descriptor> words, std::vector<double> idf)
    : words_(std::move(words)), idf_(std::move(idf)) {
  if (words_.size() < 2) throw Error(ErrorCode::kInsufficientData, "vocabulary needs >= 2 words");
  if (idf_.size() != words_.size()) {
    throw Error(ErrorCode::kInsufficientData, "one IDF weight per word required");
  }
  for (double w : idf_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kInsufficientData, "IDF weights must be finite and non-negative");
    }
  }
  id_ = fnv1a(as_bytes_of(idf_), fnv1a(as_bytes_of(words_)));
}

std::uint32_t Vocabulary::word_of(const Descriptor& d) const {
  std::uint32_t best = 0;
  int best_distance = std::numeric_limits<int>::max();
  for (std::size_t w = 0; w < words_.size(); ++w) {
    const int dist = hamming(d, words_[w]);
    if (dist < best_distance) {
      best_distance = dist;
      best = static_cast<std::uint32_t>(w);
    }
  }
  return best;
}

BowVector Vocabulary::transform(std::span<const Descriptor> descriptors) const {
  if (descriptors.empty()) return BowVector(id_, {});
  std::vector<std::uint32_t> counts(words_.size(), 0);
  for (const Descriptor& d : descriptors) ++counts[word_of(d)];
  std::vector<std::pair<std::uint32_t, double>> entries;
  double norm2 = 0.0;
  const double inv_total = 1.0 / static_cast<double>(descriptors.size());
  for (std::size_t w = 0; w < counts.size(); ++w) {
    if (counts[w] == 0) continue;
    const double weight = counts[w] * inv_total * idf_[w];
    if (weight <= 0.0) continue;
    entries.emplace_back(static_cast<std::uint32_t>(w), weight);
    norm2 += weight * weight;
  }
  if (norm2 <= 0.0) return BowVector(id_, {});
  const double inv_norm = 1.0 / std::sqrt(norm2);
  for (auto& e : entries) e.second *= inv_norm;
  return BowVector(id_, std::move(entries));
}

namespace {

constexpr char kMagic[6] = {'G', 'T', 'B', 'O', 'W', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw Error(ErrorCode::kFormat, "truncated vocabulary");
    v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const auto n = static_cast<std::uint32_t>(words_.size());
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((n >> (8 * i)) & 0xFF));
  for (const Descriptor& d : words_) {
    for (std::uint64_t word : d.bits) put_u64(out, word);
  }
  for (double w : idf_) put_u64(out, std::bit_cast<std::uint64_t>(w));
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  char magic[6] = {};
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw Error(ErrorCode::kFormat, path.string() + ": bad vocabulary magic");
  }
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw Error(ErrorCode::kFormat, "truncated vocabulary");
    n |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(c)) << (8 * i);
  }
  std::vector<Descriptor> words(n);
  for (Descriptor& d : words) {
    for (std::uint64_t& word : d.bits) word = get_u64(in);
  }
  std::vector<double> idf(n);
  for (double& w : idf) w = std::bit_cast<double>(get_u64(in));
  return {std::move(words), std::move(idf)};
}

Vocabulary build_vocabulary(std::span<const std::vector<Descriptor>> images, int k,
                            std::uint64_t seed, int max_iterations) {
  std::vector<Descriptor> pool;
  for (const auto& img : images) pool.insert(pool.end(), img.begin(), img.end());
  if (k < 2 || pool.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::kInsufficientData, "need at least k >= 2 training descriptors");
  }
  const std::size_t n = pool.size();
  std::mt19937_64 rng(seed);

  // k-means++ seeding under squared Hamming distance.
  std::vector<Descriptor> centres;
  std::vector<bool> chosen(n, false);
  std::vector<int> nearest(n, std::numeric_limits<int>::max());
  std::size_t first = static_cast<std::size_t>(rng() % n);
  centres.push_back(pool[first]);
  chosen[first] = true;
  while (centres.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], hamming(pool[i], centres.back()));
      total += static_cast<double>(nearest[i]) * nearest[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = (static_cast<double>(rng() >> 11) * 0x1.0p-53) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += static_cast<double>(nearest[i]) * nearest[i];
        if (nearest[i] > 0 && acc > target) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        for (std::size_t i = n; i-- > 0;) {
          if (nearest[i] > 0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    chosen[pick] = true;
    centres.push_back(pool[pick]);
  }

  std::vector<std::uint32_t> assignment(n, std::numeric_limits<std::uint32_t>::max());
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t best = 0;
      int best_d = std::numeric_limits<int>::max();
      for (std::size_t c = 0; c < centres.size(); ++c) {
        const int d = hamming(pool[i], centres[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<std::uint32_t>(c);
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<std::array<int, 256>> votes(centres.size());
    std::vector<int> members(centres.size(), 0);
    for (auto& v : votes) v.fill(0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& v = votes[assignment[i]];
      ++members[assignment[i]];
      for (int b = 0; b < 256; ++b) v[b] += pool[i].bit(b) ? 1 : 0;
    }
    for (std::size_t c = 0; c < centres.size(); ++c) {
      if (members[c] == 0) continue;
      Descriptor updated;
      for (int b = 0; b < 256; ++b) {
        const int twice = 2 * votes[c][b];
        const bool on = twice > members[c] || (twice == members[c] && centres[c].bit(b));
        if (on) updated.set(b);
      }
      centres[c] = updated;
    }
  }

  // Document frequency over training images.
  Vocabulary provisional(centres, std::vector<double>(centres.size(), 1.0));
  std::vector<int> doc_freq(centres.size(), 0);
  for (const auto& img : images) {
    std::vector<bool> seen(centres.size(), false);
    for (const Descriptor& d : img) seen[provisional.word_of(d)] = true;
    for (std::size_t w = 0; w < seen.size(); ++w) doc_freq[w] += seen[w] ? 1 : 0;
  }
  const double num_images = static_cast<double>(std::max<std::size_t>(images.size(), 1));
  std::vector<double> idf(centres.size());
  for (std::size_t w = 0; w < idf.size(); ++w) {
    idf[w] = std::log(num_images / static_cast<double>(std::max(doc_freq[w], 1)));
  }
  return {std::move(centres), std::move(idf)};
}

}  // namespace groundslam
