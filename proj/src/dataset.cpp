#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "groundslam/config.hpp"
#include "groundslam/data.hpp"
#include "groundslam/error.hpp"

namespace fs = std::filesystem;

namespace groundslam {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    out.push_back(first == std::string::npos ? "" : cell.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (s.empty() || end != begin + s.size()) {
    throw Error(ErrorCode::kFormat, where + ": '" + s + "' is not a number");
  }
  if (!std::isfinite(v)) throw Error(ErrorCode::kFormat, where + ": non-finite pose value");
  return v;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

SessionRecord load_session(const fs::path& dir, int session) {
  const fs::path csv = dir / "poses.csv";
  std::ifstream in(csv);
  if (!in) throw Error(ErrorCode::kFormat, csv.string() + ": missing pose file");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kFormat, csv.string() + ":1: empty file");
  const auto header = split_csv(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error(ErrorCode::kFormat, csv.string() + ":1: header lacks column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_file = column("filename");
  const std::size_t c_x = column("x_m");
  const std::size_t c_y = column("y_m");
  const std::size_t c_yaw = column("yaw_rad");
  const std::size_t needed = std::max({c_file, c_x, c_y, c_yaw}) + 1;

  SessionRecord record;
  record.session = session;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = csv.string() + ":" + std::to_string(line_no);
    const auto cells = split_csv(line);
    if (cells.size() < needed) throw Error(ErrorCode::kFormat, where + ": too few columns");
    Frame frame;
    frame.image_path = dir / cells[c_file];
    if (!fs::is_regular_file(frame.image_path)) {
      throw Error(ErrorCode::kFormat, where + ": image '" + cells[c_file] + "' does not exist");
    }
    frame.pose = Pose2(parse_number(cells[c_x], where), parse_number(cells[c_y], where),
                       parse_number(cells[c_yaw], where));
    record.frames.push_back(std::move(frame));
  }
  std::size_t images = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") ++images;
  }
  if (images != record.frames.size()) {
    throw Error(ErrorCode::kFormat, csv.string() + ":" + std::to_string(line_no) + ": " +
                                        std::to_string(record.frames.size()) + " pose rows but " +
                                        std::to_string(images) + " images");
  }
  return record;
}

}  // namespace

std::string frame_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05d.png", index);
  return buf;
}

double quantize_for_csv(double v) { return std::strtod(format_number(v).c_str(), nullptr); }

std::vector<SessionRecord> load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw Error(ErrorCode::kFormat, root.string() + ": dataset directory does not exist");
  }
  std::vector<std::pair<int, fs::path>> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    constexpr std::string_view kPrefix = "session_";
    if (!name.starts_with(kPrefix)) continue;
    const std::string digits = name.substr(kPrefix.size());
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) continue;
    dirs.emplace_back(std::stoi(digits), entry.path());
  }
  if (dirs.empty()) throw Error(ErrorCode::kFormat, root.string() + ": no session_<k> directories");
  std::sort(dirs.begin(), dirs.end());
  std::vector<SessionRecord> out;
  out.reserve(dirs.size());
  for (const auto& [k, dir] : dirs) out.push_back(load_session(dir, k));
  return out;
}

void write_poses_csv(const fs::path& path, const std::vector<std::string>& filenames,
                     const std::vector<Pose2>& poses) {
  if (filenames.size() != poses.size()) {
    throw Error(ErrorCode::kFormat, "one filename per pose required");
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "filename,x_m,y_m,yaw_rad\n";
  for (std::size_t i = 0; i < poses.size(); ++i) {
    out << filenames[i] << ',' << format_number(poses[i].x) << ',' << format_number(poses[i].y)
        << ',' << format_number(poses[i].yaw) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

void write_camera(const fs::path& path, const CameraModel& cam) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  out << "# pinhole camera, pixels; camera_to_robot is the top 3x4 block, row-major\n";
  out << "fx = " << num(cam.fx()) << "\nfy = " << num(cam.fy()) << "\ncx = " << num(cam.cx())
      << "\ncy = " << num(cam.cy()) << "\nwidth = " << cam.width()
      << "\nheight = " << cam.height() << "\ncamera_to_robot = \"";
  const Eigen::Matrix4d m = cam.camera_to_robot().matrix();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) out << (r + c > 0 ? " " : "") << num(m(r, c));
  }
  out << "\"\n";
}

CameraModel read_camera(const fs::path& path) {
  const KeyValues kv = KeyValues::from_file(path);
  for (const char* key : {"fx", "fy", "cx", "cy", "width", "height", "camera_to_robot"}) {
    if (!kv.has(key)) throw Error(ErrorCode::kConfig, path.string() + ": missing '" + key + "'");
  }
  std::istringstream ss(kv.get_string("camera_to_robot", ""));
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!(ss >> m(r, c))) {
        throw Error(ErrorCode::kConfig, path.string() + ": camera_to_robot needs 12 numbers");
      }
    }
  }
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = m.topLeftCorner<3, 3>();
  t.translation() = m.topRightCorner<3, 1>();
  return {kv.get_double("fx", 0), kv.get_double("fy", 0), kv.get_double("cx", 0),
          kv.get_double("cy", 0), kv.get_int("width", 0), kv.get_int("height", 0), t};
}

CameraModel default_synthetic_camera() {
  return CameraModel::nadir(256.0, 256.0, 128.0, 96.0, 256, 192, 0.72, 0.15, 0.0);
}

void write_wear_patches(const fs::path& path, const std::vector<WearPatch>& patches) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "session,x0_m,y0_m,x1_m,y1_m,shade\n";
  for (const auto& p : patches) {
    out << p.session << ',' << format_number(p.x0) << ',' << format_number(p.y0) << ','
        << format_number(p.x1) << ',' << format_number(p.y1) << ',' << format_number(p.shade)
        << '\n';
  }
}

std::vector<WearPatch> read_wear_patches(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<WearPatch> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto cells = split_csv(line);
    if (cells.size() < 5) throw Error(ErrorCode::kFormat, where + ": too few columns");
    WearPatch p;
    p.session = static_cast<int>(parse_number(cells[0], where));
    p.x0 = parse_number(cells[1], where);
    p.y0 = parse_number(cells[2], where);
    p.x1 = parse_number(cells[3], where);
    p.y1 = parse_number(cells[4], where);
    if (cells.size() > 5) p.shade = parse_number(cells[5], where);
    out.push_back(p);
  }
  return out;
}

}  // namespace groundslam
