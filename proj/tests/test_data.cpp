#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <doctest.h>

#include "groundslam/data.hpp"
#include "groundslam/error.hpp"

using namespace groundslam;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

// session_<k>/ with `images` PNGs and the given CSV body.
void fixture_session(const fs::path& root, int k, int images, const std::string& csv) {
  const fs::path dir = root / ("session_" + std::to_string(k));
  fs::create_directories(dir);
  for (int i = 0; i < images; ++i) write_png(dir / frame_filename(i), Image(8, 6, 3, static_cast<std::uint8_t>(10 * i)));
  write_text(dir / "poses.csv", csv);
}

const char* kThreeRows =
    "filename,x_m,y_m,yaw_rad\n"
    "img_00000.png,0,0,0\n"
    "img_00001.png,0.1,0,0.1\n"
    "img_00002.png,0.2,0.05,0.2\n";

ErrorCode load_error(const fs::path& root) {
  try {
    load_dataset(root);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

double ncc_at(const Image& a, const Image& b, int du) {
  // Correlate a(x, y) with b(x - du, y) over the overlap, central rows.
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  int n = 0;
  for (int y = 20; y < a.height() - 20; ++y) {
    for (int x = 0; x < a.width(); ++x) {
      const int xb = x - du;
      if (xb < 0 || xb >= b.width()) continue;
      const double va = a.at(x, y), vb = b.at(xb, y);
      sa += va;
      sb += vb;
      saa += va * va;
      sbb += vb * vb;
      sab += va * vb;
      ++n;
    }
  }
  const double cov = sab / n - (sa / n) * (sb / n);
  return cov / std::sqrt((saa / n - (sa / n) * (sa / n)) * (sbb / n - (sb / n) * (sb / n)));
}

WorldParams two_session_params() {
  WorldParams p;
  p.coverage_schedule = {0.0, 0.3};
  return p;
}

}  // namespace

TEST_CASE("load_dataset on fixtures") {
  TempDir tmp("groundslam_data_fixture");
  SUBCASE("two sessions of three images") {
    fixture_session(tmp.path, 0, 3, kThreeRows);
    fixture_session(tmp.path, 1, 3, kThreeRows);
    const auto sessions = load_dataset(tmp.path);
    REQUIRE(sessions.size() == 2);
    CHECK(sessions[0].frames.size() == 3);
    CHECK(sessions[1].frames.size() == 3);
    CHECK(sessions[1].session == 1);
    CHECK(sessions[0].frames[2].pose.y == doctest::Approx(0.05));
  }
  SUBCASE("extra columns are ignored") {
    fixture_session(tmp.path, 0, 1, "filename,x_m,y_m,yaw_rad,note\nimg_00000.png,1,2,0.5,hello\n");
    CHECK(load_dataset(tmp.path)[0].frames[0].pose.x == 1.0);
  }
  SUBCASE("yaw is wrapped") {
    fixture_session(tmp.path, 0, 1, "filename,x_m,y_m,yaw_rad\nimg_00000.png,0,0,3.3\n");
    CHECK(load_dataset(tmp.path)[0].frames[0].pose.yaw == doctest::Approx(3.3 - 2 * M_PI));
    CHECK(load_dataset(tmp.path)[0].frames[0].pose.yaw == doctest::Approx(-2.983).epsilon(1e-3));
  }
  SUBCASE("more images than pose rows") {
    fixture_session(tmp.path, 0, 4, kThreeRows);
    CHECK(load_error(tmp.path) == ErrorCode::kFormat);
  }
  SUBCASE("pose row without an image") {
    fixture_session(tmp.path, 0, 2, kThreeRows);
    CHECK(load_error(tmp.path) == ErrorCode::kFormat);
  }
  SUBCASE("non-finite pose") {
    fixture_session(tmp.path, 0, 1, "filename,x_m,y_m,yaw_rad\nimg_00000.png,nan,0,0\n");
    CHECK(load_error(tmp.path) == ErrorCode::kFormat);
  }
  SUBCASE("bad number, short row, bad header") {
    fixture_session(tmp.path, 0, 1, "filename,x_m,y_m,yaw_rad\nimg_00000.png,abc,0,0\n");
    CHECK(load_error(tmp.path) == ErrorCode::kFormat);
    write_text(tmp.path / "session_0" / "poses.csv", "filename,x_m,y_m,yaw_rad\nimg_00000.png,0,0\n");
    CHECK(load_error(tmp.path) == ErrorCode::kFormat);
    write_text(tmp.path / "session_0" / "poses.csv", "name,x,y,yaw\nimg_00000.png,0,0,0\n");
    CHECK(load_error(tmp.path) == ErrorCode::kFormat);
  }
  SUBCASE("error message names the file and line") {
    fixture_session(tmp.path, 0, 1, "filename,x_m,y_m,yaw_rad\nimg_00000.png,abc,0,0\n");
    try {
      load_dataset(tmp.path);
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("poses.csv:2") != std::string::npos);
    }
  }
  SUBCASE("missing directory or sessions") {
    CHECK(load_error(tmp.path / "nope") == ErrorCode::kFormat);
    CHECK(load_error(tmp.path) == ErrorCode::kFormat);
  }
  SUBCASE("corrupt image") {
    fixture_session(tmp.path, 0, 1, "filename,x_m,y_m,yaw_rad\nimg_00000.png,0,0,0\n");
    write_text(tmp.path / "session_0" / "img_00000.png", "not a png");
    CHECK_THROWS_AS(read_png(tmp.path / "session_0" / "img_00000.png"), Error);
  }
}

TEST_CASE("png and camera round trips") {
  TempDir tmp("groundslam_png_rt");
  Image rgb(7, 5, 3), gray(7, 5, 1);
  for (std::size_t i = 0; i < rgb.data().size(); ++i) rgb.data()[i] = static_cast<std::uint8_t>(i * 37);
  for (std::size_t i = 0; i < gray.data().size(); ++i) gray.data()[i] = static_cast<std::uint8_t>(i * 11);
  write_png(tmp.path / "a.png", rgb);
  write_png(tmp.path / "b.png", gray);
  CHECK(read_png(tmp.path / "a.png") == rgb);
  CHECK(read_png(tmp.path / "b.png") == gray);

  const CameraModel cam = default_synthetic_camera();
  write_camera(tmp.path / "camera.cfg", cam);
  const CameraModel back = read_camera(tmp.path / "camera.cfg");
  CHECK(back.fx() == cam.fx());
  CHECK(back.cy() == cam.cy());
  CHECK(back.width() == cam.width());
  CHECK(back.camera_to_robot().matrix().isApprox(cam.camera_to_robot().matrix(), 1e-15));
}

TEST_CASE("synthetic world") {
  const WorldParams params;
  const SyntheticWorld a = generate_world(21, params);
  const SyntheticWorld b = generate_world(21, params);
  CHECK(a.checksum() == b.checksum());
  CHECK(generate_world(22, params).checksum() != a.checksum());
  CHECK(a.visible_patches(0).empty());
  for (int s = 0; s < a.session_count(); ++s) {
    CHECK(std::abs(a.coverage(s) - params.coverage_schedule[static_cast<std::size_t>(s)]) <= 0.02);
    if (s > 0) CHECK(a.visible_patches(s).size() >= a.visible_patches(s - 1).size());
  }
  for (const WearPatch& p : a.patches()) {
    CHECK(p.session >= 1);
    CHECK(p.x0 >= 0.0);
    CHECK(p.x1 <= params.size_m);
  }

  WorldParams bad = params;
  bad.coverage_schedule = {0.1, 0.2};
  CHECK_THROWS_AS(generate_world(1, bad), Error);
}

TEST_CASE("render_view") {
  const SyntheticWorld world = generate_world(5, two_session_params());
  const CameraModel cam = default_synthetic_camera();

  SUBCASE("deterministic") {
    CHECK(render_view(world, cam, Pose2(2.0, 2.0, 0.4), 1) == render_view(world, cam, Pose2(2.0, 2.0, 0.4), 1));
  }
  SUBCASE("out of bounds") {
    try {
      render_view(world, cam, Pose2(0.05, 0.05, 0.0), 0);
      FAIL("expected a render error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kRender);
    }
  }
  SUBCASE("changes only inside new patches") {
    const auto patches = world.visible_patches(1);
    REQUIRE(!patches.empty());
    int checked = 0;
    for (const WearPatch& p : patches) {
      const double cx = 0.5 * (p.x0 + p.x1), cy = 0.5 * (p.y0 + p.y1);
      const Pose2 pose(cx - 0.15, cy, 0.0);
      Image before, after;
      try {
        before = render_view(world, cam, pose, 0);
        after = render_view(world, cam, pose, 1);
      } catch (const Error&) {
        continue;  // footprint leaves the world
      }
      int changed = 0, outside = 0;
      for (int v = 0; v < cam.height(); ++v) {
        for (int u = 0; u < cam.width(); ++u) {
          bool differs = false;
          for (int c = 0; c < 3; ++c) differs |= before.at(u, v, c) != after.at(u, v, c);
          if (!differs) continue;
          ++changed;
          const GroundPoint g = pose * cam.pixel_to_ground({u + 0.5, v + 0.5});
          // One texel of bilinear support around each patch.
          bool in_patch = false;
          for (const WearPatch& q : patches) {
            in_patch |= g.x() >= q.x0 - 0.005 && g.x() <= q.x1 + 0.005 && g.y() >= q.y0 - 0.005 &&
                        g.y() <= q.y1 + 0.005;
          }
          if (!in_patch) ++outside;
        }
      }
      CHECK(changed > 0);
      CHECK(outside == 0);
      if (++checked == 3) break;
    }
    CHECK(checked > 0);
  }
  SUBCASE("shifted pose shifts the image") {
    const Pose2 p(2.0, 2.0, 0.0);
    const Image a = to_grayscale(render_view(world, cam, p, 0));
    const Image b = to_grayscale(render_view(world, cam, Pose2(2.1, 2.0, 0.0), 0));
    // Robot +x is image +u, so the texture moves by -0.1 * fx / h pixels.
    const double predicted = -0.1 * cam.fx() / 0.72;
    int best = 0;
    double best_ncc = -2.0;
    for (int du = -60; du <= 60; ++du) {
      const double c = ncc_at(b, a, du);
      if (c > best_ncc) {
        best_ncc = c;
        best = du;
      }
    }
    MESSAGE("NCC peak " << best_ncc << " at " << best << " px, predicted " << predicted);
    CHECK(std::abs(best - predicted) <= 1.0);
    CHECK(best_ncc > 0.9);
  }
}

TEST_CASE("plans and on-disk sessions") {
  const SyntheticWorld world = generate_world(8, two_session_params());
  const CameraModel cam = default_synthetic_camera();
  PlanParams pp;
  pp.sessions = 2;
  pp.poses_per_session = 20;
  const TrajectoryPlan plan = generate_plan(world, cam, 8, pp);
  REQUIRE(plan.sessions.size() == 2);

  for (const auto& session : plan.sessions) {
    REQUIRE(session.size() == 20);
    for (std::size_t t = 1; t < session.size(); ++t) {
      const FovQuad a = fov_quad(cam, session[t - 1]), b = fov_quad(cam, session[t]);
      const double f = convex_intersection_area(a, b) / a.area();
      CHECK(f >= 0.25 - 1e-9);
      CHECK(f <= 0.5 + 1e-9);
    }
  }

  TempDir tmp("groundslam_sessions_rt");
  generate_sessions(world, cam, plan, tmp.path);
  const auto loaded = load_dataset(tmp.path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].frames.size() + loaded[1].frames.size() == 40);
  const auto rendered = render_sessions(world, cam, plan);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t t = 0; t < 20; ++t) {
      const Pose2& p = loaded[s].frames[t].pose;
      const Pose2& q = plan.sessions[s][t];
      CHECK(std::abs(p.x - q.x) <= 1e-9);
      CHECK(std::abs(p.y - q.y) <= 1e-9);
      CHECK(std::abs(p.yaw - q.yaw) <= 1e-9);
    }
    CHECK(read_png(loaded[s].frames[7].image_path) == rendered[s][7]);
  }
  CHECK(fs::exists(tmp.path / "camera.cfg"));
  const auto patches = read_wear_patches(tmp.path / "wear.csv");
  REQUIRE(patches.size() == world.patches().size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    CHECK(patches[i].x0 == doctest::Approx(world.patches()[i].x0));
    CHECK(patches[i].shade == doctest::Approx(world.patches()[i].shade));
    CHECK(patches[i].session == world.patches()[i].session);
  }
}

TEST_CASE("default plan keeps consecutive overlap in range") {
  const SyntheticWorld world = generate_world(1);
  const CameraModel cam = default_synthetic_camera();
  const TrajectoryPlan plan = generate_plan(world, cam, 1);
  REQUIRE(plan.sessions.size() == 5);
  double lo = 1.0, hi = 0.0;
  for (const auto& session : plan.sessions) {
    CHECK(session.size() == 50);
    for (std::size_t t = 1; t < session.size(); ++t) {
      const FovQuad a = fov_quad(cam, session[t - 1]), b = fov_quad(cam, session[t]);
      const double f = convex_intersection_area(a, b) / a.area();
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
  }
  MESSAGE("consecutive overlap fraction range [" << lo << ", " << hi << "]");
  CHECK(lo >= 0.25 - 1e-9);
  CHECK(hi <= 0.5 + 1e-9);
}
