#include <algorithm>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "groundslam/data.hpp"
#include "groundslam/error.hpp"
#include "groundslam/eval.hpp"
#include "groundslam/geometry.hpp"
#include "groundslam/imaging.hpp"
#include "groundslam/pipeline.hpp"

namespace py = pybind11;
using namespace groundslam;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C) uint8 array -> Image.
Image to_image(const U8Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("image must be (H, W) or (H, W, C)");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  std::vector<std::uint8_t> data(a.data(), a.data() + a.size());
  return Image(w, h, c, std::move(data));
}

py::array_t<std::uint8_t> to_array(const Image& img) {
  std::vector<py::ssize_t> shape{img.height(), img.width()};
  if (img.channels() > 1) shape.push_back(img.channels());
  py::array_t<std::uint8_t> out(shape);
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

IntensityDistribution to_distribution(const std::vector<double>& v) {
  if (v.size() != 256) throw py::value_error("distribution must have 256 bins");
  IntensityDistribution d;
  std::copy(v.begin(), v.end(), d.bins.begin());
  return d;
}

std::vector<std::vector<double>> distributions_of(const U8Array& img) {
  std::vector<std::vector<double>> out;
  for (const auto& d : image_distributions(to_image(img))) out.emplace_back(d.bins.begin(), d.bins.end());
  return out;
}

py::dict run_synthetic(std::uint64_t seed, const std::string& strategy, int sessions, int poses) {
  WorldParams wp;
  if (sessions != static_cast<int>(wp.coverage_schedule.size())) {
    wp.coverage_schedule.clear();
    for (int s = 0; s < sessions; ++s) wp.coverage_schedule.push_back(sessions > 1 ? 0.8 * s / (sessions - 1) : 0.0);
  }
  const SyntheticWorld world = generate_world(seed, wp);
  const CameraModel cam = default_synthetic_camera();
  PlanParams pp;
  pp.sessions = sessions;
  pp.poses_per_session = poses;
  const MultiSessionData data = synthesize(world, cam, generate_plan(world, cam, seed, pp));
  PipelineConfig config;
  VariantRun run;
  if (strategy == "original_many") {
    run = run_original_many(data, config, cam);
  } else {
    config.strategy = parse_strategy(strategy);
    run = run_variant(data, config, cam);
  }
  const Rmse r = rmse(flatten(run.estimated), flatten(data.truth));
  const Confusion c = loop_confusion(run.decisions, data.truth, cam);
  py::dict out;
  out["rmse_m"] = r.position_m;
  out["rmse_deg"] = r.orientation_deg;
  out["tp"] = c.tp;
  out["fp"] = c.fp;
  out["tn"] = c.tn;
  out["fn"] = c.fn;
  out["estimated"] = run.estimated;
  out["truth"] = data.truth;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Ground-texture SLAM core";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  py::class_<Pose2>(m, "Pose2")
      .def(py::init<>())
      .def(py::init<double, double, double>(), py::arg("x"), py::arg("y"), py::arg("yaw"))
      .def_readwrite("x", &Pose2::x)
      .def_readwrite("y", &Pose2::y)
      .def_readwrite("yaw", &Pose2::yaw)
      .def("inverse", &Pose2::inverse)
      .def("__mul__", [](const Pose2& a, const Pose2& b) { return a * b; })
      .def("__repr__", [](const Pose2& p) {
        return "Pose2(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " + std::to_string(p.yaw) + ")";
      });

  py::class_<CameraModel>(m, "CameraModel")
      .def_static("nadir", &CameraModel::nadir, py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"),
                  py::arg("width"), py::arg("height"), py::arg("height_m"), py::arg("offset_x") = 0.0,
                  py::arg("offset_y") = 0.0)
      .def_property_readonly("width", &CameraModel::width)
      .def_property_readonly("height", &CameraModel::height)
      .def("pixel_to_ground", &CameraModel::pixel_to_ground)
      .def("ground_to_pixel", &CameraModel::ground_to_pixel)
      .def("footprint_area", &CameraModel::footprint_area);
  m.def("default_camera", &default_synthetic_camera);

  m.def("fov_quad", [](const CameraModel& cam, const Pose2& p) {
    const FovQuad q = fov_quad(cam, p);
    return std::vector<GroundPoint>(q.corners.begin(), q.corners.end());
  });
  m.def("convex_intersection_area", [](const std::vector<GroundPoint>& a, const std::vector<GroundPoint>& b) {
    return convex_intersection_area(std::span<const GroundPoint>(a), std::span<const GroundPoint>(b));
  });

  m.def(
      "kld_channel",
      [](const std::vector<double>& p, const std::vector<double>& q, double eps) {
        return kld_channel(to_distribution(p), to_distribution(q), eps);
      },
      py::arg("p"), py::arg("q"), py::arg("epsilon") = kDefaultEpsilon);
  m.def("image_distributions", &distributions_of, "Per-channel normalised 256-bin histograms");
  m.def(
      "kld_score",
      [](const U8Array& img, const std::vector<std::vector<double>>& baseline, double eps) {
        std::vector<IntensityDistribution> base;
        for (const auto& b : baseline) base.push_back(to_distribution(b));
        return kld_score(to_image(img), base, eps);
      },
      py::arg("image"), py::arg("baseline"), py::arg("epsilon") = kDefaultEpsilon);
  m.def("joint_intensity_histogram",
        [](const U8Array& a, const U8Array& b) { return joint_intensity_histogram(to_image(a), to_image(b)); });
  m.def("jih_symmetry_score", [](const Eigen::MatrixXd& h) { return jih_symmetry_score(h); });

  py::class_<SyntheticWorld>(m, "SyntheticWorld")
      .def(py::init([](std::uint64_t seed, std::vector<double> schedule) {
             WorldParams wp;
             if (!schedule.empty()) wp.coverage_schedule = std::move(schedule);
             return generate_world(seed, wp);
           }),
           py::arg("seed"), py::arg("coverage_schedule") = std::vector<double>{})
      .def_property_readonly("session_count", &SyntheticWorld::session_count)
      .def("coverage", &SyntheticWorld::coverage)
      .def("worn", &SyntheticWorld::worn)
      .def("checksum", &SyntheticWorld::checksum);
  m.def("render_view", [](const SyntheticWorld& w, const CameraModel& cam, const Pose2& p, int session) {
    return to_array(render_view(w, cam, p, session));
  });

  py::enum_<Strategy>(m, "Strategy")
      .value("ORIGINAL", Strategy::kOriginal)
      .value("KLD_COLOR", Strategy::kKldColor)
      .value("KLD_GRAY", Strategy::kKldGray)
      .value("VISUAL_OVERLAP", Strategy::kVisualOverlap)
      .value("JIH", Strategy::kJih)
      .value("ODOMETRY_ONLY", Strategy::kOdometryOnly);

  m.def("rmse", [](const std::vector<Pose2>& est, const std::vector<Pose2>& truth) {
    const Rmse r = rmse(est, truth);
    return py::make_tuple(r.position_m, r.orientation_deg);
  });
  m.def("run_synthetic", &run_synthetic, py::arg("seed"), py::arg("strategy") = "kld_color",
        py::arg("sessions") = 5, py::arg("poses") = 50,
        "Generate a synthetic world, run one strategy and report RMSE and loop confusion counts");
}
