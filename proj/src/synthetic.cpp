#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "groundslam/data.hpp"
#include "groundslam/error.hpp"

namespace fs = std::filesystem;

namespace groundslam {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice_value(std::uint64_t seed, int octave, std::int64_t ix, std::int64_t iy) {
  std::uint64_t h = splitmix64(seed ^ (static_cast<std::uint64_t>(octave) << 56));
  h = splitmix64(h ^ static_cast<std::uint64_t>(ix));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(iy) * 0x632be59bd9b4e019ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

std::int64_t wrap_index(std::int64_t i, std::int64_t period) {
  if (period <= 0) return i;
  const std::int64_t m = i % period;
  return m < 0 ? m + period : m;
}

/// Smooth value noise in [0, 1] at lattice coordinates (u, v); `period`
/// lattice cells (0 = aperiodic).
double value_noise(std::uint64_t seed, int octave, double u, double v, std::int64_t period) {
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const auto iu = static_cast<std::int64_t>(fu);
  const auto iv = static_cast<std::int64_t>(fv);
  const double a = fade(u - fu);
  const double b = fade(v - fv);
  const double v00 = lattice_value(seed, octave, wrap_index(iu, period), wrap_index(iv, period));
  const double v10 = lattice_value(seed, octave, wrap_index(iu + 1, period), wrap_index(iv, period));
  const double v01 = lattice_value(seed, octave, wrap_index(iu, period), wrap_index(iv + 1, period));
  const double v11 =
      lattice_value(seed, octave, wrap_index(iu + 1, period), wrap_index(iv + 1, period));
  return (1.0 - b) * ((1.0 - a) * v00 + a * v10) + b * ((1.0 - a) * v01 + a * v11);
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

double stretch(double n, double gain) { return std::clamp(0.5 + (n - 0.5) * gain, 0.0, 1.0); }

constexpr int kTextureOctaves = 6;
constexpr int kTapeOctaves = 4;
constexpr double kAuditCell = 0.01;
// Per-patch brightness offset of the tape, grey levels.
constexpr double kMaxShade = 10.0;

std::array<double, 3> bilinear_rgb(const std::vector<std::uint8_t>& raster, int n, double u,
                                   double v, bool periodic) {
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const int iu = static_cast<int>(fu);
  const int iv = static_cast<int>(fv);
  const double a = u - fu;
  const double b = v - fv;
  auto idx = [n, periodic](int i) {
    if (periodic) return static_cast<int>(wrap_index(i, n));
    return std::clamp(i, 0, n - 1);
  };
  const int x0 = idx(iu);
  const int x1 = idx(iu + 1);
  const int y0 = idx(iv);
  const int y1 = idx(iv + 1);
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    auto at = [&](int x, int y) {
      return static_cast<double>(raster[(static_cast<std::size_t>(y) * n + x) * 3 + c]);
    };
    out[c] = (1.0 - b) * ((1.0 - a) * at(x0, y0) + a * at(x1, y0)) +
             b * ((1.0 - a) * at(x0, y1) + a * at(x1, y1));
  }
  return out;
}

std::vector<GroundPoint> rectangle(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

}  // namespace

std::vector<GroundPoint> WearPatch::polygon() const { return rectangle(x0, y0, x1, y1); }

SyntheticWorld::SyntheticWorld(std::uint64_t seed, WorldParams params)
    : seed_(seed), params_(std::move(params)) {
  if (!(params_.size_m > 0.0) || !(params_.texel_m > 0.0) || !(params_.texture_scale_m > 0.0) ||
      params_.tape_period_m < 0.0 || !(params_.patch_min_m > 0.0) ||
      params_.patch_max_m < params_.patch_min_m) {
    throw Error(ErrorCode::kConfig, "world parameters must be positive");
  }
  if (params_.coverage_schedule.empty() || params_.coverage_schedule.front() != 0.0) {
    throw Error(ErrorCode::kConfig, "coverage schedule must start with 0 for session 0");
  }
  for (std::size_t i = 1; i < params_.coverage_schedule.size(); ++i) {
    const double c = params_.coverage_schedule[i];
    if (c < params_.coverage_schedule[i - 1] || c >= 1.0) {
      throw Error(ErrorCode::kConfig, "coverage schedule must be non-decreasing and below 1");
    }
  }
  if (params_.tape_period_m == 0.0) params_.tape_period_m = params_.size_m;
  build_base();
  build_tape();
  place_patches();
}

void SyntheticWorld::build_base() {
  base_n_ = static_cast<int>(std::ceil(params_.size_m / params_.texel_m));
  base_.assign(static_cast<std::size_t>(base_n_) * base_n_ * 3, 0);
  const std::uint64_t tex_seed = splitmix64(seed_ ^ 0xba5eULL);
  const std::uint64_t chroma_seed = splitmix64(seed_ ^ 0xc0c0ULL);
  for (int j = 0; j < base_n_; ++j) {
    const double y = (j + 0.5) * params_.texel_m;
    for (int i = 0; i < base_n_; ++i) {
      const double x = (i + 0.5) * params_.texel_m;
      double n = 0.0;
      double total = 0.0;
      for (int o = 0; o < kTextureOctaves; ++o) {
        const double spacing = params_.texture_scale_m * std::ldexp(1.0, o);
        const double w = 1.0;
        n += w * value_noise(tex_seed, o, x / spacing, y / spacing, 0);
        total += w;
      }
      const double lum = stretch(n / total, 3.5);
      const double chroma = value_noise(chroma_seed, 0, x / 0.3, y / 0.3, 0) - 0.5;
      std::uint8_t* px = &base_[(static_cast<std::size_t>(j) * base_n_ + i) * 3];
      px[0] = to_byte(60.0 + 140.0 * lum + 20.0 * chroma);
      px[1] = to_byte(45.0 + 100.0 * lum - 15.0 * chroma);
      px[2] = to_byte(20.0 + 60.0 * lum + 10.0 * chroma);
    }
  }
}

void SyntheticWorld::build_tape() {
  tape_n_ = std::max(1, static_cast<int>(std::lround(params_.tape_period_m / params_.texel_m)));
  tape_.assign(static_cast<std::size_t>(tape_n_) * tape_n_ * 3, 0);
  const std::uint64_t tape_seed = splitmix64(seed_ ^ 0x7a9eULL);
  const double texel = params_.tape_period_m / tape_n_;
  for (int j = 0; j < tape_n_; ++j) {
    const double y = (j + 0.5) * texel;
    for (int i = 0; i < tape_n_; ++i) {
      const double x = (i + 0.5) * texel;
      double n = 0.0;
      for (int o = 0; o < kTapeOctaves; ++o) {
        const auto cells = std::max<std::int64_t>(
            1, std::llround(params_.tape_period_m / (params_.texture_scale_m * std::ldexp(1.5, o))));
        const double spacing = params_.tape_period_m / static_cast<double>(cells);
        n += value_noise(tape_seed, o, x / spacing, y / spacing, cells);
      }
      const double t = stretch(n / kTapeOctaves, 3.5);
      std::uint8_t* px = &tape_[(static_cast<std::size_t>(j) * tape_n_ + i) * 3];
      px[0] = to_byte(170.0 + 75.0 * t);
      px[1] = to_byte(176.0 + 72.0 * t);
      px[2] = to_byte(184.0 + 70.0 * t);
    }
  }
}

void SyntheticWorld::place_patches() {
  const int cells = static_cast<int>(std::ceil(params_.size_m / kAuditCell));
  std::vector<bool> covered(static_cast<std::size_t>(cells) * cells, false);
  std::size_t covered_count = 0;
  const double total_cells = static_cast<double>(cells) * cells;
  std::mt19937_64 rng(splitmix64(seed_ ^ 0x9a7cULL));
  auto uniform = [&rng](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  };
  auto cell_range = [&](double a, double b) {
    const int lo = std::clamp(static_cast<int>(std::floor(a / kAuditCell + 0.5)), 0, cells);
    const int hi = std::clamp(static_cast<int>(std::floor(b / kAuditCell + 0.5)), 0, cells);
    return std::pair{lo, hi};
  };
  auto newly_covered = [&](const WearPatch& p) {
    const auto [i0, i1] = cell_range(p.x0, p.x1);
    const auto [j0, j1] = cell_range(p.y0, p.y1);
    std::size_t added = 0;
    for (int j = j0; j < j1; ++j) {
      for (int i = i0; i < i1; ++i) added += covered[static_cast<std::size_t>(j) * cells + i] ? 0 : 1;
    }
    return added;
  };
  auto commit = [&](const WearPatch& p) {
    const auto [i0, i1] = cell_range(p.x0, p.x1);
    const auto [j0, j1] = cell_range(p.y0, p.y1);
    for (int j = j0; j < j1; ++j) {
      for (int i = i0; i < i1; ++i) {
        auto ref = covered[static_cast<std::size_t>(j) * cells + i];
        if (!ref) {
          ref = true;
          ++covered_count;
        }
      }
    }
    patches_.push_back(p);
  };

  constexpr double kSlack = 0.01;
  for (int s = 1; s < session_count(); ++s) {
    const double target = params_.coverage_schedule[static_cast<std::size_t>(s)];
    for (int attempt = 0; attempt < 20000 && covered_count / total_cells < target - kSlack / 2;
         ++attempt) {
      double w = uniform(params_.patch_min_m, params_.patch_max_m);
      double h = uniform(params_.patch_min_m, params_.patch_max_m);
      for (int shrink = 0; shrink < 8; ++shrink) {
        w = std::min(w, params_.size_m);
        h = std::min(h, params_.size_m);
        WearPatch p;
        p.x0 = uniform(0.0, params_.size_m - w);
        p.y0 = uniform(0.0, params_.size_m - h);
        p.x1 = p.x0 + w;
        p.y1 = p.y0 + h;
        p.session = s;
        p.shade = uniform(-kMaxShade, kMaxShade);
        const double after = (covered_count + newly_covered(p)) / total_cells;
        if (after <= target + kSlack / 2) {
          if (after > covered_count / total_cells) commit(p);
          break;
        }
        w *= 0.7;
        h *= 0.7;
      }
    }
  }
}

std::vector<WearPatch> SyntheticWorld::visible_patches(int session) const {
  std::vector<WearPatch> out;
  for (const auto& p : patches_) {
    if (p.session <= session) out.push_back(p);
  }
  return out;
}

bool SyntheticWorld::worn(double x, double y, int session) const {
  return std::any_of(patches_.begin(), patches_.end(), [&](const WearPatch& p) {
    return p.session <= session && p.contains(x, y);
  });
}

double SyntheticWorld::coverage(int session) const {
  const int cells = static_cast<int>(std::ceil(params_.size_m / kAuditCell));
  std::size_t hits = 0;
  for (int j = 0; j < cells; ++j) {
    for (int i = 0; i < cells; ++i) {
      hits += worn((i + 0.5) * kAuditCell, (j + 0.5) * kAuditCell, session) ? 1 : 0;
    }
  }
  return static_cast<double>(hits) / (static_cast<double>(cells) * cells);
}

std::array<double, 3> SyntheticWorld::sample(double x, double y, int session) const {
  for (auto it = patches_.rbegin(); it != patches_.rend(); ++it) {
    if (it->session > session || !it->contains(x, y)) continue;
    const double texel = params_.tape_period_m / tape_n_;
    auto rgb = bilinear_rgb(tape_, tape_n_, x / texel - 0.5, y / texel - 0.5, true);
    for (double& v : rgb) v += it->shade;
    return rgb;
  }
  return bilinear_rgb(base_, base_n_, x / params_.texel_m - 0.5, y / params_.texel_m - 0.5, false);
}

std::uint64_t SyntheticWorld::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ULL;
  };
  for (std::uint8_t b : base_) mix(b);
  for (std::uint8_t b : tape_) mix(b);
  for (const auto& p : patches_) {
    for (double v : {p.x0, p.y0, p.x1, p.y1, p.shade, static_cast<double>(p.session)}) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) mix(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return h;
}

SyntheticWorld generate_world(std::uint64_t seed, const WorldParams& params) {
  return SyntheticWorld(seed, params);
}

Image render_view(const SyntheticWorld& world, const CameraModel& cam, const Pose2& pose,
                  int session) {
  const double size = world.params().size_m;
  for (const GroundPoint& c : fov_quad(cam, pose).corners) {
    if (c.x() < 0.0 || c.y() < 0.0 || c.x() > size || c.y() > size) {
      throw Error(ErrorCode::kRender, "field of view leaves the world bounds");
    }
  }
  Image img(cam.width(), cam.height(), 3);
  for (int v = 0; v < cam.height(); ++v) {
    for (int u = 0; u < cam.width(); ++u) {
      const GroundPoint g = pose * cam.pixel_to_ground(Eigen::Vector2d(u, v));
      const auto rgb = world.sample(g.x(), g.y(), session);
      for (int c = 0; c < 3; ++c) img.at(u, v, c) = to_byte(rgb[c]);
    }
  }
  return img;
}

// ---------------------------------------------------------------------------

namespace {

bool footprint_inside(const SyntheticWorld& world, const CameraModel& cam, const Pose2& pose) {
  const double size = world.params().size_m;
  constexpr double kMargin = 0.02;
  for (const GroundPoint& c : fov_quad(cam, pose).corners) {
    if (c.x() < kMargin || c.y() < kMargin || c.x() > size - kMargin || c.y() > size - kMargin) {
      return false;
    }
  }
  return true;
}

Pose2 quantized(const Pose2& p) {
  return {quantize_for_csv(p.x), quantize_for_csv(p.y), quantize_for_csv(p.yaw)};
}

}  // namespace

TrajectoryPlan generate_plan(const SyntheticWorld& world, const CameraModel& cam,
                             std::uint64_t seed, const PlanParams& params) {
  if (params.sessions <= 0 || params.poses_per_session <= 0) {
    throw Error(ErrorCode::kConfig, "plan needs at least one session and pose");
  }
  const double half = world.params().size_m / 2.0;
  const double fov_area = cam.footprint_area();
  TrajectoryPlan plan;
  for (int s = 0; s < params.sessions; ++s) {
    std::mt19937_64 rng(splitmix64(seed * 0x100000001b3ULL + static_cast<std::uint64_t>(s)));
    auto uniform = [&rng](double lo, double hi) {
      return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    };
    const double radius_scale = (half - 0.8) / 1.2;
    const double cx = half + uniform(-0.06, 0.06);
    const double cy = half + uniform(-0.06, 0.06);
    const double rx = radius_scale * (1.2 + uniform(-0.06, 0.06));
    const double ry = radius_scale * (1.0 + uniform(-0.06, 0.06));
    auto pose_at = [&](double phi, double yaw_jitter, double jx, double jy) {
      const double x = cx + rx * std::cos(phi) + jx;
      const double y = cy + ry * std::sin(phi) + jy;
      const double heading = std::atan2(ry * std::cos(phi), -rx * std::sin(phi));
      return quantized(Pose2(x, y, heading + yaw_jitter));
    };
    constexpr double kDeg = std::numbers::pi / 180.0;
    double phi = -std::numbers::pi / 2.0 + uniform(-0.05, 0.05);
    std::vector<Pose2> poses;
    poses.push_back(pose_at(phi, uniform(-2.0, 2.0) * kDeg, uniform(-0.02, 0.02),
                            uniform(-0.02, 0.02)));
    if (!footprint_inside(world, cam, poses.back())) {
      throw Error(ErrorCode::kRender, "planned start pose leaves the world");
    }
    for (int t = 1; t < params.poses_per_session; ++t) {
      bool placed = false;
      for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
        const double step = uniform(0.30, 0.50);
        const double speed =
            std::hypot(rx * std::sin(phi), ry * std::cos(phi));
        const double next_phi = phi + step / speed;
        const Pose2 candidate = pose_at(next_phi, uniform(-3.0, 3.0) * kDeg,
                                        uniform(-0.015, 0.015), uniform(-0.015, 0.015));
        if (!footprint_inside(world, cam, candidate)) continue;
        const double overlap =
            convex_intersection_area(fov_quad(cam, poses.back()), fov_quad(cam, candidate)) /
            fov_area;
        if (overlap < params.min_overlap || overlap > params.max_overlap) continue;
        poses.push_back(candidate);
        phi = next_phi;
        placed = true;
      }
      if (!placed) throw Error(ErrorCode::kRender, "could not place a pose with the required overlap");
    }
    plan.sessions.push_back(std::move(poses));
  }
  return plan;
}

std::vector<std::vector<Image>> render_sessions(const SyntheticWorld& world,
                                                const CameraModel& cam,
                                                const TrajectoryPlan& plan) {
  std::vector<std::vector<Image>> out;
  for (std::size_t s = 0; s < plan.sessions.size(); ++s) {
    std::vector<Image> images;
    images.reserve(plan.sessions[s].size());
    for (const Pose2& p : plan.sessions[s]) {
      images.push_back(render_view(world, cam, p, static_cast<int>(s)));
    }
    out.push_back(std::move(images));
  }
  return out;
}

void generate_sessions(const SyntheticWorld& world, const CameraModel& cam,
                       const TrajectoryPlan& plan, const fs::path& root) {
  fs::create_directories(root);
  for (std::size_t s = 0; s < plan.sessions.size(); ++s) {
    const fs::path dir = root / ("session_" + std::to_string(s));
    fs::create_directories(dir);
    std::vector<std::string> names;
    for (std::size_t t = 0; t < plan.sessions[s].size(); ++t) {
      names.push_back(frame_filename(static_cast<int>(t)));
      write_png(dir / names.back(), render_view(world, cam, plan.sessions[s][t], static_cast<int>(s)));
    }
    write_poses_csv(dir / "poses.csv", names, plan.sessions[s]);
  }
  write_camera(root / "camera.cfg", cam);
  write_wear_patches(root / "wear.csv", world.patches());
}

}  // namespace groundslam
