#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "groundslam/imaging.hpp"

namespace groundslam {

struct Keypoint {
  double px = 0.0;
  double py = 0.0;
  double response = 0.0;     // Harris corner measure
  double orientation = 0.0;  // radians, image coordinates (v down)
};

/// 256-bit binary descriptor.
struct Descriptor {
  std::array<std::uint64_t, 4> bits{};

  bool bit(int i) const { return (bits[i >> 6] >> (i & 63)) & 1U; }
  void set(int i) { bits[i >> 6] |= std::uint64_t{1} << (i & 63); }
  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

int hamming(const Descriptor& a, const Descriptor& b);

struct DetectorOptions {
  int contrast_threshold = 20;  // FAST-style circle contrast test
  int min_contrast_pixels = 8;  // of the 16 circle pixels
  int border = 6;
  double harris_k = 0.04;
};

struct Features {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;
};

/// Single-scale oriented binary features on an 8-bit grayscale image:
/// Harris maxima that pass a FAST-style circle contrast test, ranked by
/// Harris response, with intensity-centroid orientation and a steered
/// 256-pair intensity-comparison descriptor. Deterministic.
Features detect_and_describe(const Image& gray, int max_keypoints,
                             const DetectorOptions& options = {});

/// The fixed sampling pattern (256 point pairs, patch coordinates).
const std::array<std::array<float, 4>, 256>& descriptor_pattern();

struct Match {
  int index_a = 0;
  int index_b = 0;
  int hamming_distance = 0;
};

struct MatcherOptions {
  int max_distance = 64;
  double ratio = 0.8;
};

/// Mutual nearest neighbours under Hamming distance that pass the absolute
/// threshold and the ratio test in both directions. Sorted by index_a.
std::vector<Match> match_descriptors(std::span<const Descriptor> a, std::span<const Descriptor> b,
                                     const MatcherOptions& options = {});

class BowVector {
 public:
  BowVector() = default;
  BowVector(std::uint64_t vocabulary_id, std::vector<std::pair<std::uint32_t, double>> entries)
      : vocabulary_id_(vocabulary_id), entries_(std::move(entries)) {}

  std::uint64_t vocabulary_id() const { return vocabulary_id_; }
  /// Sorted by word id, unit L2 norm (empty when there was nothing to score).
  const std::vector<std::pair<std::uint32_t, double>>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::uint64_t vocabulary_id_ = 0;
  std::vector<std::pair<std::uint32_t, double>> entries_;
};

/// Cosine similarity of two TF-IDF vectors, in [0, 1].
double bow_similarity(const BowVector& a, const BowVector& b);

class Vocabulary {
 public:
  Vocabulary(std::vector<Descriptor> words, std::vector<double> idf);

  std::size_t size() const { return words_.size(); }
  const std::vector<Descriptor>& words() const { return words_; }
  const std::vector<double>& idf() const { return idf_; }
  std::uint64_t id() const { return id_; }

  std::uint32_t word_of(const Descriptor& d) const;
  BowVector transform(std::span<const Descriptor> descriptors) const;

  /// "GTBOW1", u32 word count, 32-byte words, f64 IDF weights; little-endian.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_ && a.idf_ == b.idf_;
  }

 private:
  std::vector<Descriptor> words_;
  std::vector<double> idf_;
  std::uint64_t id_ = 0;
};

/// Flat k-medoids-style clustering under Hamming distance (bitwise-majority
/// centre update), seeded k-means++ initialisation; IDF weights from the
/// per-image descriptor sets.
Vocabulary build_vocabulary(std::span<const std::vector<Descriptor>> images, int k,
                            std::uint64_t seed, int max_iterations = 10);

}  // namespace groundslam
