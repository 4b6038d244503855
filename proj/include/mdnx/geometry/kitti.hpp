#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mdnx/geometry/box.hpp"

namespace mdnx::geo {

struct ParseError : Error {
  using Error::Error;
};

/// Detection classes. Other KITTI types parse but carry category -1.
enum Category : int { kCar = 0, kPedestrian = 1, kCyclist = 2 };
inline constexpr int kNumCategories = 3;

const char* category_name(int category);
/// -1 when `type` is not one of the detection classes.
int category_from_name(std::string_view type);
bool is_kitti_type(std::string_view type);

struct KittiObject {
  std::string type;
  bool unknown_type = false;  // not a KITTI devkit type
  double truncation = 0;
  int occlusion = 0;
  double alpha = 0;
  Box2D bbox;
  Box3D box;  // box.category and box.score mirror the label line
};

struct Annotation {
  std::vector<KittiObject> objects;
};

Annotation parse_kitti_label(std::string_view text);
std::string serialize_kitti_label(const Annotation& ann);

CameraCalib parse_kitti_calib(std::string_view text);
std::string serialize_kitti_calib(const CameraCalib& calib);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_number(double v);
double parse_number(std::string_view token);

enum class Difficulty : int { kEasy = 0, kModerate = 1, kHard = 2 };
inline constexpr int kNumDifficulties = 3;
const char* difficulty_name(Difficulty d);

struct DifficultyThresholds {
  double min_height[3] = {40, 25, 25};
  int max_occlusion[3] = {0, 1, 2};
  double max_truncation[3] = {0.15, 0.30, 0.50};

  /// Height limits are in pixels of a 375-row KITTI image; scale them for
  /// other image heights.
  static DifficultyThresholds for_image_height(int height);
};

/// True when the object satisfies the limits of tier `d` (tiers nest).
bool in_difficulty(const KittiObject& obj, Difficulty d, const DifficultyThresholds& t);
/// Easiest tier the object satisfies, or -1.
int difficulty_of(const KittiObject& obj, const DifficultyThresholds& t);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace mdnx::geo
