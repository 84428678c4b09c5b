#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "groundslam/geometry.hpp"
#include "groundslam/imaging.hpp"

namespace groundslam {

// --- image files -----------------------------------------------------------

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

// --- on-disk datasets ------------------------------------------------------
//
//   root/session_<k>/poses.csv        header: filename,x_m,y_m,yaw_rad
//   root/session_<k>/img_<t:05>.png
//   root/camera.cfg                   optional camera description

struct Frame {
  std::filesystem::path image_path;
  Pose2 pose;
};

struct SessionRecord {
  int session = 0;
  std::vector<Frame> frames;
};

/// Parses every session_<k> directory under `root`, ordered by k. Extra CSV
/// columns are ignored; yaw is wrapped into (-pi, pi].
std::vector<SessionRecord> load_dataset(const std::filesystem::path& root);

/// Writes one session's pose file (9 significant digits).
void write_poses_csv(const std::filesystem::path& path, const std::vector<std::string>& filenames,
                     const std::vector<Pose2>& poses);

/// Rounds a value the same way the pose file stores it.
double quantize_for_csv(double v);

std::string frame_filename(int index);

void write_camera(const std::filesystem::path& path, const CameraModel& cam);
CameraModel read_camera(const std::filesystem::path& path);

/// Camera used by the synthetic datasets: 256x192 nadir view at 0.72 m.
CameraModel default_synthetic_camera();

// --- synthetic low-dynamic-change worlds -----------------------------------

/// Axis-aligned rectangle of "tape" that appears at `session` and stays.
struct WearPatch {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;
  int session = 1;
  double shade = 0.0;  // brightness offset of this patch's tape, grey levels

  bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  std::vector<GroundPoint> polygon() const;
};

struct WorldParams {
  double size_m = 4.0;
  double texel_m = 0.0025;
  /// Finest value-noise lattice spacing of the base texture, metres.
  double texture_scale_m = 0.006;
  /// Cumulative worn fraction of the world visible in each session;
  /// entry 0 must be 0.
  std::vector<double> coverage_schedule = {0.0, 0.15, 0.35, 0.55, 0.8};
  double patch_min_m = 0.3;
  double patch_max_m = 1.2;
  /// Repeat length of the tape pattern on a world-aligned grid; tape a whole
  /// period away looks identical, which is what makes worn areas alias.
  /// 0 means one tile over the whole world.
  double tape_period_m = 1.0;
};

class SyntheticWorld {
 public:
  SyntheticWorld(std::uint64_t seed, WorldParams params);

  std::uint64_t seed() const { return seed_; }
  const WorldParams& params() const { return params_; }
  int session_count() const { return static_cast<int>(params_.coverage_schedule.size()); }
  const std::vector<WearPatch>& patches() const { return patches_; }

  /// Patches visible in `session` (appearance session <= session), oldest first.
  std::vector<WearPatch> visible_patches(int session) const;
  bool worn(double x, double y, int session) const;
  /// Worn fraction of the world area in `session` on a 1 cm audit grid.
  double coverage(int session) const;

  /// Bilinearly sampled RGB appearance at a world point.
  std::array<double, 3> sample(double x, double y, int session) const;

  /// FNV-1a checksum of the base and tape rasters plus the patch list.
  std::uint64_t checksum() const;

 private:
  void build_base();
  void build_tape();
  void place_patches();

  std::uint64_t seed_;
  WorldParams params_;
  int base_n_ = 0;
  int tape_n_ = 0;
  std::vector<std::uint8_t> base_;  // base_n_ x base_n_ x 3
  std::vector<std::uint8_t> tape_;  // tape_n_ x tape_n_ x 3, tiled in world coordinates
  std::vector<WearPatch> patches_;
};

SyntheticWorld generate_world(std::uint64_t seed, const WorldParams& params = {});

/// Renders the ground seen from `pose` in `session`.
Image render_view(const SyntheticWorld& world, const CameraModel& cam, const Pose2& pose,
                  int session);

struct TrajectoryPlan {
  std::vector<std::vector<Pose2>> sessions;
};

struct PlanParams {
  int sessions = 5;
  int poses_per_session = 50;
  double min_overlap = 0.25;
  double max_overlap = 0.5;
};

/// Repeated laps of a perturbed ellipse per session, starting near the same
/// place; consecutive footprints overlap within [min_overlap, max_overlap].
/// Poses are pre-quantised to the pose-file precision.
TrajectoryPlan generate_plan(const SyntheticWorld& world, const CameraModel& cam,
                             std::uint64_t seed, const PlanParams& params = {});

/// Renders every planned pose in memory: images[session][index].
std::vector<std::vector<Image>> render_sessions(const SyntheticWorld& world,
                                                const CameraModel& cam,
                                                const TrajectoryPlan& plan);

/// Writes images, pose files and camera.cfg under `root` (plus wear.csv with
/// the patch list for evaluation tooling).
void generate_sessions(const SyntheticWorld& world, const CameraModel& cam,
                       const TrajectoryPlan& plan, const std::filesystem::path& root);

void write_wear_patches(const std::filesystem::path& path, const std::vector<WearPatch>& patches);
std::vector<WearPatch> read_wear_patches(const std::filesystem::path& path);

}  // namespace groundslam
