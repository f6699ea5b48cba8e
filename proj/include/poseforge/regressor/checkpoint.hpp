#pragma once

// Checkpoint file: one JSON header line, then the parameters as a flat
// little-endian float32 blob (layer order, each weight matrix row-major and
// followed by its bias).

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poseforge/correspondences.hpp"
#include "poseforge/errors.hpp"
#include "poseforge/regressor/network.hpp"

namespace poseforge::regressor {

inline constexpr const char* kCheckpointFormat = "pose-forge-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// Probe scene used to store a reference forward output alongside the weights.
struct GoldenProbe {
  std::uint64_t seed = 0x5EED5EED;
  double noise_sigma = 5.0;
  double outlier_rate = 0.1;
};

inline std::uint64_t fnv1a64(const std::vector<unsigned char>& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::vector<unsigned char> encode_weights(const Vector<float>& data) {
  std::vector<unsigned char> out;
  out.reserve(static_cast<std::size_t>(data.size()) * 4);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(data[i]);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>((u >> (8 * b)) & 0xFFu));
  }
  return out;
}

inline Vector<float> decode_weights(const unsigned char* bytes, std::size_t count) {
  Vector<float> data(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    data[static_cast<Eigen::Index>(i)] = std::bit_cast<float>(u);
  }
  return data;
}

inline nlohmann::json config_to_json(const NetworkConfig& c) {
  return {{"aggregation", to_string(c.aggregation)},
          {"mode", to_string(c.mode)},
          {"n", c.n},
          {"m", c.m},
          {"D", c.feature_dim()},
          {"input_dim", c.input_dim()},
          {"local_widths", c.local_widths},
          {"head_widths", c.head_widths},
          {"leaky_slope", c.leaky_slope},
          {"translation_scale", {c.translation_scale.x(), c.translation_scale.y(), c.translation_scale.z()}},
          {"image", {c.image.width, c.image.height}},
          {"offset_scale", c.offset_scale}};
}

inline NetworkConfig config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
  c.mode = parse_mode(j.at("mode").get<std::string>());
  c.n = j.at("n").get<std::size_t>();
  c.m = j.at("m").get<std::size_t>();
  c.local_widths = j.at("local_widths").get<std::vector<std::size_t>>();
  c.head_widths = j.at("head_widths").get<std::vector<std::size_t>>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  const auto ts = j.at("translation_scale").get<std::vector<double>>();
  if (ts.size() != 3) throw InvalidArgument("translation_scale must have 3 entries");
  c.translation_scale = Vec3(ts[0], ts[1], ts[2]);
  const auto im = j.at("image").get<std::vector<int>>();
  if (im.size() != 2) throw InvalidArgument("image must have 2 entries");
  c.image = {im[0], im[1]};
  c.offset_scale = j.at("offset_scale").get<double>();
  if (j.at("D").get<std::size_t>() != c.feature_dim() ||
      j.at("input_dim").get<std::size_t>() != c.input_dim()) {
    throw InvalidArgument("inconsistent feature or input dimension");
  }
  c.validate();
  return c;
}

inline SceneSample golden_scene(const NetworkConfig& c, const GoldenProbe& probe) {
  const ObjectModel model = unit_sphere_model();
  return generate_scene(0, probe.seed, c.mode, model, CameraIntrinsics::synthetic(), c.m,
                        probe.noise_sigma, probe.outlier_rate);
}

/// Raw head output (quaternion, de-normalized translation) in double precision.
inline std::array<double, kOutputDim> golden_output(const RegressorParams<double>& p,
                                                   const GoldenProbe& probe) {
  const ObjectModel model = unit_sphere_model();
  const SceneSample scene = golden_scene(p.config(), probe);
  const auto pred = forward(scene, p, model.keypoints);
  return {pred.trace.raw_quaternion[0], pred.trace.raw_quaternion[1], pred.trace.raw_quaternion[2],
          pred.trace.raw_quaternion[3], pred.trace.translation[0],    pred.trace.translation[1],
          pred.trace.translation[2]};
}

struct Checkpoint {
  RegressorParams<float> params;
  GoldenProbe probe;
  std::array<double, kOutputDim> golden{};
  nlohmann::json extra;  // free-form metadata (training config, epoch)
};

inline void save_checkpoint(const RegressorParams<float>& params, const std::string& path,
                            const nlohmann::json& extra = nlohmann::json::object(),
                            const GoldenProbe& probe = {}) {
  const std::vector<unsigned char> blob = encode_weights(params.data());
  const auto golden = golden_output(params.cast<double>(), probe);
  nlohmann::json header = {{"format", kCheckpointFormat},
                           {"version", kCheckpointVersion},
                           {"network", config_to_json(params.config())},
                           {"param_count", params.size()},
                           {"checksum", "fnv1a64:" + hex64(fnv1a64(blob))},
                           {"golden",
                            {{"seed", probe.seed},
                             {"noise_sigma", probe.noise_sigma},
                             {"outlier_rate", probe.outlier_rate},
                             {"output", golden}}},
                           {"extra", extra}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError(path, "write failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("malformed checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  try {
    if (header.at("format").get<std::string>() != kCheckpointFormat) {
      throw ParseError(1, "not a checkpoint file");
    }
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ParseError(1, "unsupported checkpoint version " + std::to_string(version));
    }
    ck.params = RegressorParams<float>(config_from_json(header.at("network")));
    if (header.at("param_count").get<std::size_t>() != ck.params.size()) {
      throw ParseError(1, "parameter count does not match the architecture");
    }
    const auto& g = header.at("golden");
    ck.probe = {g.at("seed").get<std::uint64_t>(), g.at("noise_sigma").get<double>(),
                g.at("outlier_rate").get<double>()};
    ck.golden = g.at("output").get<std::array<double, kOutputDim>>();
    ck.extra = header.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("bad checkpoint header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(1, e.what());
  }
  const std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (blob.size() != ck.params.size() * 4) {
    throw IoError(path, "weight blob has " + std::to_string(blob.size()) + " bytes, expected " +
                            std::to_string(ck.params.size() * 4));
  }
  const std::string checksum = "fnv1a64:" + hex64(fnv1a64(blob));
  if (checksum != header.at("checksum").get<std::string>()) {
    throw IoError(path, "checksum mismatch");
  }
  ck.params.data() = decode_weights(blob.data(), ck.params.size());
  return ck;
}

/// Largest absolute deviation between the stored golden output and a fresh
/// double-precision forward pass on the loaded weights.
inline double golden_deviation(const Checkpoint& ck) {
  const auto now = golden_output(ck.params.cast<double>(), ck.probe);
  double worst = 0.0;
  for (std::size_t i = 0; i < kOutputDim; ++i) worst = std::max(worst, std::abs(now[i] - ck.golden[i]));
  return worst;
}

}  // namespace poseforge::regressor
