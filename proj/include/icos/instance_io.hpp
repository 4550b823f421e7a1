#pragma once

#include <Eigen/Core>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "icos/core.hpp"
#include "icos/synth.hpp"

namespace icos {

// Self-describing JSON dump of one generated instance: points, inlier mask,
// generating transform, sigma, and seed, sufficient to replay a solve
// exactly. Doubles survive the round trip bit-for-bit.
inline constexpr const char* kInstanceSchema = "icos-instance/1";

namespace detail {

inline nlohmann::json vector_to_json(const Eigen::Vector3d& v) {
  return nlohmann::json::array({v.x(), v.y(), v.z()});
}

inline Eigen::Vector3d vector_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3)
    throw UnsupportedFormat("instance: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace detail

inline nlohmann::json instance_to_json(const Instance& instance) {
  nlohmann::json j;
  j["schema"] = kInstanceSchema;
  j["kind"] =
      instance.set.kind() == PairKind::VectorPairs ? "vectors" : "points";
  j["sigma"] = instance.truth.sigma;
  j["seed"] = instance.seed;
  j["transform"]["scale"] = instance.truth.transform.scale;
  nlohmann::json rotation = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      rotation.push_back(instance.truth.transform.rotation(r, c));
  j["transform"]["rotation"] = rotation;
  j["transform"]["translation"] =
      detail::vector_to_json(instance.truth.transform.translation);
  j["inlier_mask"] = instance.truth.inlier_mask;
  nlohmann::json src = nlohmann::json::array();
  nlohmann::json dst = nlohmann::json::array();
  for (int i = 0; i < instance.set.size(); ++i) {
    src.push_back(detail::vector_to_json(instance.set[i].src));
    dst.push_back(detail::vector_to_json(instance.set[i].dst));
  }
  j["src"] = src;
  j["dst"] = dst;
  return j;
}

inline Instance instance_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("schema", "") != kInstanceSchema)
    throw UnsupportedFormat("instance: missing or unknown schema tag");
  try {
    Instance instance;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind != "vectors" && kind != "points")
      throw UnsupportedFormat("instance: unknown kind " + kind);
    instance.truth.sigma = j.at("sigma").get<double>();
    instance.seed = j.at("seed").get<std::uint64_t>();
    const nlohmann::json& transform = j.at("transform");
    instance.truth.transform.scale = transform.at("scale").get<double>();
    const nlohmann::json& rotation = transform.at("rotation");
    if (!rotation.is_array() || rotation.size() != 9)
      throw UnsupportedFormat("instance: rotation must have 9 entries");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        instance.truth.transform.rotation(r, c) =
            rotation[3 * r + c].get<double>();
    instance.truth.transform.translation =
        detail::vector_from_json(transform.at("translation"));
    instance.truth.inlier_mask =
        j.at("inlier_mask").get<std::vector<bool>>();
    const nlohmann::json& src_json = j.at("src");
    const nlohmann::json& dst_json = j.at("dst");
    if (!src_json.is_array() || !dst_json.is_array() ||
        src_json.size() != dst_json.size() ||
        src_json.size() != instance.truth.inlier_mask.size())
      throw UnsupportedFormat("instance: src/dst/mask sizes disagree");
    std::vector<Eigen::Vector3d> src, dst;
    src.reserve(src_json.size());
    dst.reserve(dst_json.size());
    for (size_t i = 0; i < src_json.size(); ++i) {
      src.push_back(detail::vector_from_json(src_json[i]));
      dst.push_back(detail::vector_from_json(dst_json[i]));
    }
    instance.set = CorrespondenceSet::from_pairs(
        src, dst,
        kind == "vectors" ? PairKind::VectorPairs : PairKind::PointPairs);
    return instance;
  } catch (const nlohmann::json::exception& e) {
    throw UnsupportedFormat(std::string("instance: malformed document: ") +
                            e.what());
  }
}

inline void save_instance(const std::string& path, const Instance& instance) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << instance_to_json(instance).dump(2) << "\n";
  if (!out) throw IoError(path + ": write failed");
}

inline Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UnsupportedFormat(path + ": not valid JSON: " + e.what());
  }
  return instance_from_json(j);
}

// Plain-text correspondence list: one "i j" pair per line indexing into two
// vertex lists, with blank lines and '#' comments allowed.
inline std::vector<std::pair<int, int>> load_index_pairs(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::vector<std::pair<int, int>> pairs;
  std::string line;
  long line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream words(line);
    int i = 0, j = 0;
    if (!(words >> i)) continue;  // blank or comment-only line
    if (!(words >> j))
      throw UnsupportedFormat(path + ": line " + std::to_string(line_number) +
                              " needs two indices");
    std::string extra;
    if (words >> extra)
      throw UnsupportedFormat(path + ": line " + std::to_string(line_number) +
                              " has trailing tokens");
    if (i < 0 || j < 0)
      throw UnsupportedFormat(path + ": line " + std::to_string(line_number) +
                              " has a negative index");
    pairs.emplace_back(i, j);
  }
  return pairs;
}

}  // namespace icos
