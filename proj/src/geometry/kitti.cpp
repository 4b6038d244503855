#include "mdnx/geometry/kitti.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mdnx::geo {

namespace {

constexpr std::array<const char*, 3> kCategoryNames = {"Car", "Pedestrian", "Cyclist"};
constexpr std::array<std::string_view, 9> kKittiTypes = {"Car",     "Van",      "Truck", "Pedestrian", "Person_sitting",
                                                         "Cyclist", "Tram", "Misc",  "DontCare"};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = end + 1;
  }
  return out;
}

}  // namespace

const char* category_name(int category) {
  if (category < 0 || category >= kNumCategories) return "Unknown";
  return kCategoryNames[static_cast<std::size_t>(category)];
}

int category_from_name(std::string_view type) {
  for (int i = 0; i < kNumCategories; ++i)
    if (type == kCategoryNames[static_cast<std::size_t>(i)]) return i;
  return -1;
}

bool is_kitti_type(std::string_view type) {
  for (auto t : kKittiTypes)
    if (t == type) return true;
  return false;
}

std::string format_number(double v) {
  if (v == 0) return "0";  // also folds -0
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_number(std::string_view token) {
  double v = 0;
  const char* first = token.data();
  if (!token.empty() && token.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v)) {
    throw ParseError("malformed number '" + std::string(token) + "'");
  }
  return v;
}

Annotation parse_kitti_label(std::string_view text) {
  Annotation ann;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto f = split_ws(lines[ln]);
    if (f.empty()) continue;
    const std::string where = "label line " + std::to_string(ln + 1);
    if (f.size() != 15 && f.size() != 16) {
      throw ParseError(where + ": expected 15 or 16 fields, got " + std::to_string(f.size()));
    }
    auto num = [&](std::size_t i) {
      try {
        return parse_number(f[i]);
      } catch (const ParseError& e) {
        throw ParseError(where + ": " + e.what());
      }
    };
    KittiObject o;
    o.type = std::string(f[0]);
    o.unknown_type = !is_kitti_type(o.type);
    o.truncation = num(1);
    const double occ = num(2);
    if (occ != std::floor(occ)) throw ParseError(where + ": occlusion must be an integer");
    o.occlusion = static_cast<int>(occ);
    o.alpha = num(3);
    o.bbox.x_min = num(4);
    o.bbox.y_min = num(5);
    o.bbox.x_max = num(6);
    o.bbox.y_max = num(7);
    o.box.h = num(8);
    o.box.w = num(9);
    o.box.l = num(10);
    o.box.location = Vec3(num(11), num(12), num(13));
    o.box.yaw = num(14);
    o.box.category = category_from_name(o.type);
    if (f.size() == 16) o.box.score = num(15);
    ann.objects.push_back(std::move(o));
  }
  return ann;
}

std::string serialize_kitti_label(const Annotation& ann) {
  std::string out;
  for (const auto& o : ann.objects) {
    const double fields[] = {o.truncation,          double(o.occlusion),   o.alpha,
                             o.bbox.x_min,          o.bbox.y_min,          o.bbox.x_max,
                             o.bbox.y_max,          o.box.h,               o.box.w,
                             o.box.l,               o.box.location.x(),    o.box.location.y(),
                             o.box.location.z(),    o.box.yaw};
    out += o.type;
    for (double v : fields) out += ' ' + format_number(v);
    if (o.box.score) out += ' ' + format_number(*o.box.score);
    out += '\n';
  }
  return out;
}

CameraCalib parse_kitti_calib(std::string_view text) {
  for (auto line : split_lines(text)) {
    auto f = split_ws(line);
    if (f.empty() || f[0] != "P2:") continue;
    if (f.size() != 13) throw ParseError("calib P2 needs 12 values, got " + std::to_string(f.size() - 1));
    CameraCalib c;
    for (int i = 0; i < 12; ++i) c.P(i / 4, i % 4) = parse_number(f[static_cast<std::size_t>(i + 1)]);
    c.validate();
    return c;
  }
  throw ParseError("calib has no P2 line");
}

std::string serialize_kitti_calib(const CameraCalib& calib) {
  std::string out = "P2:";
  for (int i = 0; i < 12; ++i) out += ' ' + format_number(calib.P(i / 4, i % 4));
  return out + '\n';
}

const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy:
      return "easy";
    case Difficulty::kModerate:
      return "moderate";
    case Difficulty::kHard:
      return "hard";
  }
  return "?";
}

DifficultyThresholds DifficultyThresholds::for_image_height(int height) {
  DifficultyThresholds t;
  const double s = height / 375.0;
  for (double& h : t.min_height) h *= s;
  return t;
}

bool in_difficulty(const KittiObject& obj, Difficulty d, const DifficultyThresholds& t) {
  const int i = static_cast<int>(d);
  return obj.bbox.height() >= t.min_height[i] && obj.occlusion <= t.max_occlusion[i] &&
         obj.truncation <= t.max_truncation[i];
}

int difficulty_of(const KittiObject& obj, const DifficultyThresholds& t) {
  for (int i = 0; i < kNumDifficulties; ++i)
    if (in_difficulty(obj, static_cast<Difficulty>(i), t)) return i;
  return -1;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace mdnx::geo
