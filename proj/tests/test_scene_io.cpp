#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "poseforge/scene_io.hpp"

using namespace poseforge;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("poseforge_test_" + name);
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::vector<SceneSample> three_scenes(CorrespondenceMode mode) {
  DatasetConfig cfg;
  cfg.count = 3;
  cfg.seed = 17;
  cfg.mode = mode;
  cfg.m = 25;
  cfg.noise_sigma = 4.5;
  cfg.outlier_rate = 0.2;
  return generate_dataset(cfg, unit_sphere_model());
}

}  // namespace

TEST(SceneIo, EmptyListWritesHeaderOnly) {
  const auto path = temp_path("empty.jsonl");
  write_scenes({}, path.string());
  const auto lines = read_lines(path);
  ASSERT_EQ(lines.size(), 1u);
  const auto h = nlohmann::json::parse(lines[0]);
  EXPECT_EQ(h.at("format"), "pose-forge-scenes");
  EXPECT_EQ(h.at("version"), 1);
  EXPECT_TRUE(read_scenes(path.string()).empty());
}

TEST(SceneIo, RoundTripBitExact) {
  for (auto mode : {CorrespondenceMode::point, CorrespondenceMode::vector}) {
    const auto path = temp_path("three.jsonl");
    const auto scenes = three_scenes(mode);
    write_scenes(scenes, path.string());
    SceneFileHeader header;
    const auto back = read_scenes(path.string(), &header);
    EXPECT_EQ(back, scenes);
    EXPECT_EQ(header.mode, mode);
    EXPECT_EQ(header.n, 8u);
    EXPECT_EQ(header.m, 25u);
  }
}

TEST(SceneIo, TruncatedLineNamesLine) {
  const auto path = temp_path("truncated.jsonl");
  write_scenes(three_scenes(CorrespondenceMode::point), path.string());
  auto lines = read_lines(path);
  lines[2] = lines[2].substr(0, lines[2].size() / 2);
  {
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
  }
  try {
    read_scenes(path.string());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(SceneIo, VersionMismatch) {
  const auto path = temp_path("version.jsonl");
  {
    std::ofstream out(path, std::ios::trunc);
    out << R"({"format":"pose-forge-scenes","version":2,"mode":"point","n":8,"m":200})" << '\n';
  }
  try {
    read_scenes(path.string());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(SceneIo, MixedModesRejected) {
  auto scenes = three_scenes(CorrespondenceMode::point);
  scenes.push_back(three_scenes(CorrespondenceMode::vector).front());
  EXPECT_THROW(write_scenes(scenes, temp_path("mixed.jsonl").string()), InvalidArgument);
}

TEST(SceneIo, MissingFile) {
  EXPECT_THROW(read_scenes("/nonexistent/dir/scenes.jsonl"), IoError);
  EXPECT_THROW(write_scenes({}, "/nonexistent/dir/scenes.jsonl"), IoError);
}
