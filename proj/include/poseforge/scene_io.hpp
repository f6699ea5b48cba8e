#pragma once

// JSON-lines scene files. Line 1 is a header, every following line one scene:
//
//   {"format":"pose-forge-scenes","version":1,"mode":"point","n":8,"m":200}
//   {"scene_id":0,"seed":...,"mode":"point","intrinsics":[fx,fy,cx,cy],
//    "truth":{"q":[w,x,y,z],"t":[x,y,z]},"noise_sigma":0,"outlier_rate":0,
//    "clusters":[[[x,y,dx,dy],...],...]}
//
// Doubles are written in shortest round-trip form, so read(write(s)) == s bit for bit.

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poseforge/correspondences.hpp"
#include "poseforge/errors.hpp"

namespace poseforge {

inline constexpr const char* kSceneFormat = "pose-forge-scenes";
inline constexpr int kSceneFormatVersion = 1;

inline nlohmann::json scene_to_json(const SceneSample& s) {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& cl : s.clusters) {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& c : cl.members) members.push_back({c.x, c.y, c.dx, c.dy});
    clusters.push_back(std::move(members));
  }
  const auto& k = s.intrinsics;
  // Poses are stored verbatim (not re-canonicalized) to keep the round trip exact.
  return {{"scene_id", s.scene_id},
          {"seed", s.seed},
          {"mode", to_string(s.mode)},
          {"intrinsics", {k.fx(), k.fy(), k.cx(), k.cy()}},
          {"truth",
           {{"q", {s.truth.rotation.w, s.truth.rotation.x, s.truth.rotation.y, s.truth.rotation.z}},
            {"t", {s.truth.translation.x(), s.truth.translation.y(), s.truth.translation.z()}}}},
          {"noise_sigma", s.noise_sigma},
          {"outlier_rate", s.outlier_rate},
          {"clusters", std::move(clusters)}};
}

inline SceneSample scene_from_json(const nlohmann::json& j) {
  SceneSample s;
  s.scene_id = j.at("scene_id").get<std::int64_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.mode = parse_mode(j.at("mode").get<std::string>());
  const auto& k = j.at("intrinsics");
  if (k.size() != 4) throw InvalidArgument("intrinsics needs 4 values");
  s.intrinsics = CameraIntrinsics(k[0].get<double>(), k[1].get<double>(), k[2].get<double>(),
                                  k[3].get<double>());
  s.truth = pose_from_json(j.at("truth"));
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.outlier_rate = j.at("outlier_rate").get<double>();
  const auto& clusters = j.at("clusters");
  s.clusters.resize(clusters.size());
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    auto& cl = s.clusters[i];
    cl.keypoint_index = static_cast<int>(i);
    cl.members.reserve(clusters[i].size());
    for (const auto& m : clusters[i]) {
      if (m.size() != 4) throw InvalidArgument("correspondence needs 4 values");
      cl.members.push_back({m[0].get<double>(), m[1].get<double>(), m[2].get<double>(),
                            m[3].get<double>()});
    }
  }
  return s;
}

struct SceneFileHeader {
  CorrespondenceMode mode = CorrespondenceMode::point;
  std::size_t n = 8;
  std::size_t m = kDefaultClusterSize;
};

inline void write_scenes(const std::vector<SceneSample>& samples, const std::string& path) {
  SceneFileHeader header;
  if (!samples.empty()) {
    header = {samples.front().mode, samples.front().clusters.size(),
              samples.front().members_per_cluster()};
  }
  for (const auto& s : samples) {
    if (s.mode != header.mode || s.clusters.size() != header.n ||
        s.members_per_cluster() != header.m) {
      throw InvalidArgument("all scenes in a file must share mode, n and m");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  const nlohmann::json h = {{"format", kSceneFormat},
                            {"version", kSceneFormatVersion},
                            {"mode", to_string(header.mode)},
                            {"n", header.n},
                            {"m", header.m}};
  out << h.dump() << '\n';
  for (const auto& s : samples) out << scene_to_json(s).dump() << '\n';
  if (!out) throw IoError(path, "write failed");
}

inline std::vector<SceneSample> read_scenes(const std::string& path,
                                            SceneFileHeader* header_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "missing header line");
  ++line_no;
  SceneFileHeader header;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.at("format").get<std::string>() != kSceneFormat) {
      throw ParseError(line_no, "not a scene file");
    }
    const int version = h.at("version").get<int>();
    if (version != kSceneFormatVersion) {
      throw ParseError(line_no, "unsupported scene file version " + std::to_string(version));
    }
    header = {parse_mode(h.at("mode").get<std::string>()), h.at("n").get<std::size_t>(),
              h.at("m").get<std::size_t>()};
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(line_no, std::string("malformed header: ") + e.what());
  }
  std::vector<SceneSample> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      SceneSample s = scene_from_json(nlohmann::json::parse(line));
      if (s.mode != header.mode || s.clusters.size() != header.n ||
          s.members_per_cluster() != header.m) {
        throw InvalidArgument("scene does not match the file header");
      }
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw ParseError(line_no, std::string("malformed scene record: ") + e.what());
    }
  }
  if (header_out) *header_out = header;
  return out;
}

}  // namespace poseforge
