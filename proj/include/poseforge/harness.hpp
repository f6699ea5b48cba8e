#pragma once

// Robustness sweeps: every method sees the same scenes in each
// (noise sigma, outlier rate) cell; results go to CSV.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poseforge/correspondences.hpp"
#include "poseforge/errors.hpp"
#include "poseforge/geometry.hpp"
#include "poseforge/ransac.hpp"
#include "poseforge/regressor/checkpoint.hpp"
#include "poseforge/regressor/train.hpp"
#include "poseforge/scene_io.hpp"
#include "poseforge/voting.hpp"

namespace poseforge::harness {

enum class MethodKind { epnp_ransac, p3p_ransac, voting, regressor, single_pool };

inline std::string_view to_string(MethodKind k) {
  switch (k) {
    case MethodKind::epnp_ransac: return "epnp-ransac";
    case MethodKind::p3p_ransac: return "p3p-ransac";
    case MethodKind::voting: return "voting";
    case MethodKind::regressor: return "regressor";
    case MethodKind::single_pool: return "single-pool";
  }
  return "?";
}

inline MethodKind parse_method_kind(std::string_view s) {
  for (auto k : {MethodKind::epnp_ransac, MethodKind::p3p_ransac, MethodKind::voting,
                 MethodKind::regressor, MethodKind::single_pool}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown method '" + std::string(s) + "'");
}

inline bool is_learned(MethodKind k) { return k == MethodKind::regressor || k == MethodKind::single_pool; }
inline bool is_ransac(MethodKind k) { return k == MethodKind::epnp_ransac || k == MethodKind::p3p_ransac; }

struct MethodSpec {
  MethodKind kind = MethodKind::epnp_ransac;
  std::string checkpoint;  // learned methods only
  std::string name;        // CSV label; defaults to the kind

  std::string label() const { return name.empty() ? std::string(to_string(kind)) : name; }
};

inline constexpr double kFailureErrorRatio = 10.0;

struct SweepSpec {
  std::vector<double> sigma_values{0, 3, 6, 9, 12, 15};
  std::vector<double> outlier_values{0, 0.1, 0.2, 0.3};
  std::vector<MethodSpec> methods;
  std::size_t scenes_per_cell = 2000;
  std::uint64_t seed = 0;
  std::size_t m = kDefaultClusterSize;
  RansacConfig ransac{};
  bool record_timing = true;  // false writes mean_ms = 0, making outputs byte-reproducible

  void validate() const {
    if (sigma_values.empty() || outlier_values.empty()) throw InvalidArgument("sweep axes must be nonempty");
    if (methods.empty()) throw InvalidArgument("sweep needs at least one method");
    if (scenes_per_cell < 1) throw InvalidArgument("scenes_per_cell must be >= 1");
    if (m < 1) throw InvalidArgument("m must be >= 1");
    for (double s : sigma_values) if (!(s >= 0.0)) throw InvalidArgument("sigma values must be >= 0");
    for (double o : outlier_values) {
      if (!(o >= 0.0 && o <= 1.0)) throw InvalidArgument("outlier values must lie in [0, 1]");
    }
    for (const auto& mth : methods) {
      if (is_learned(mth.kind) && mth.checkpoint.empty()) {
        throw InvalidArgument("method " + mth.label() + " needs a checkpoint");
      }
    }
    ransac.validate();
  }
};

inline nlohmann::json spec_to_json(const SweepSpec& s) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : s.methods) {
    nlohmann::json j = {{"kind", to_string(m.kind)}};
    if (!m.checkpoint.empty()) j["checkpoint"] = m.checkpoint;
    if (!m.name.empty()) j["name"] = m.name;
    methods.push_back(j);
  }
  return {{"sigma_values", s.sigma_values},
          {"outlier_values", s.outlier_values},
          {"methods", methods},
          {"scenes_per_cell", s.scenes_per_cell},
          {"seed", s.seed},
          {"m", s.m},
          {"ransac",
           {{"max_iterations", s.ransac.max_iterations},
            {"inlier_threshold", s.ransac.inlier_threshold},
            {"confidence", s.ransac.confidence},
            {"min_inliers", s.ransac.min_inliers}}},
          {"record_timing", s.record_timing}};
}

/// Methods may be given as plain strings ("epnp-ransac") or objects
/// ({"kind": "regressor", "checkpoint": "model.ckpt", "name": "..."}).
/// Relative checkpoint paths resolve against `base_dir`.
inline SweepSpec spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  SweepSpec s;
  try {
    s.sigma_values = j.at("sigma_values").get<std::vector<double>>();
    s.outlier_values = j.at("outlier_values").get<std::vector<double>>();
    for (const auto& m : j.at("methods")) {
      MethodSpec ms;
      if (m.is_string()) {
        ms.kind = parse_method_kind(m.get<std::string>());
      } else {
        ms.kind = parse_method_kind(m.at("kind").get<std::string>());
        ms.checkpoint = m.value("checkpoint", "");
        ms.name = m.value("name", "");
      }
      if (!ms.checkpoint.empty() && !base_dir.empty() && std::filesystem::path(ms.checkpoint).is_relative()) {
        ms.checkpoint = (base_dir / ms.checkpoint).string();
      }
      s.methods.push_back(ms);
    }
    s.scenes_per_cell = j.value("scenes_per_cell", s.scenes_per_cell);
    s.seed = j.value("seed", s.seed);
    s.m = j.value("m", s.m);
    s.record_timing = j.value("record_timing", s.record_timing);
    if (j.contains("ransac")) {
      const auto& r = j.at("ransac");
      s.ransac.max_iterations = r.value("max_iterations", s.ransac.max_iterations);
      s.ransac.inlier_threshold = r.value("inlier_threshold", s.ransac.inlier_threshold);
      s.ransac.confidence = r.value("confidence", s.ransac.confidence);
      s.ransac.min_inliers = r.value("min_inliers", s.ransac.min_inliers);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad sweep spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline SweepSpec read_sweep_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open for reading");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, std::string("malformed JSON: ") + e.what());
  }
  return spec_from_json(j, std::filesystem::path(path).parent_path());
}

struct CellResult {
  std::string method;
  double sigma = 0.0;
  double outlier_rate = 0.0;
  double mean_err = 0.0;
  double median_err = 0.0;
  double add01d_rate = 0.0;
  double mean_ms = 0.0;
  std::size_t n_scenes = 0;
  std::size_t n_failed = 0;
  std::vector<double> errors;  // per scene, in scene order; not serialized

  bool same_summary(const CellResult& o) const {
    return method == o.method && sigma == o.sigma && outlier_rate == o.outlier_rate &&
           mean_err == o.mean_err && median_err == o.median_err && add01d_rate == o.add01d_rate &&
           mean_ms == o.mean_ms && n_scenes == o.n_scenes && n_failed == o.n_failed;
  }
};

struct SweepResult {
  std::vector<CellResult> cells;  // sigma-major, then outlier rate, then method order

  const CellResult* find(const std::string& method, double sigma, double outlier_rate) const {
    for (const auto& c : cells) {
      if (c.method == method && c.sigma == sigma && c.outlier_rate == outlier_rate) return &c;
    }
    return nullptr;
  }
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline double standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

namespace detail {

struct LoadedMethod {
  MethodSpec spec;
  std::optional<regressor::RegressorParams<float>> params;
  CorrespondenceMode mode = CorrespondenceMode::point;
};

struct Outcome {
  bool failed = false;
  double error = kFailureErrorRatio;
  bool add = false;
  double ms = 0.0;
};

}  // namespace detail

/// Evaluates every method on identical scenes per cell. Solver errors count
/// as failures scored at kFailureErrorRatio.
inline SweepResult run_sweep(const SweepSpec& spec) {
  spec.validate();
  const ObjectModel model = unit_sphere_model();
  const CameraIntrinsics k = CameraIntrinsics::synthetic();

  std::vector<detail::LoadedMethod> methods;
  bool need_point = false, need_vector = false;
  for (const auto& ms : spec.methods) {
    detail::LoadedMethod lm{ms, std::nullopt, CorrespondenceMode::point};
    if (is_learned(ms.kind)) {
      if (!std::filesystem::exists(ms.checkpoint)) throw IoError(ms.checkpoint, "checkpoint not found");
      regressor::Checkpoint ck = regressor::load_checkpoint(ms.checkpoint);
      const auto want = ms.kind == MethodKind::regressor ? regressor::Aggregation::grouped
                                                         : regressor::Aggregation::single_pool;
      if (ck.params.config().aggregation != want) {
        throw InvalidArgument("checkpoint " + ms.checkpoint + " is not a " + std::string(to_string(ms.kind)) +
                              " model");
      }
      if (ck.params.config().n != model.keypoints.size()) {
        throw InvalidArgument("checkpoint " + ms.checkpoint + " expects a different keypoint count");
      }
      lm.mode = ck.params.config().mode;
      lm.params = std::move(ck.params);
    } else if (ms.kind == MethodKind::voting) {
      lm.mode = CorrespondenceMode::vector;
    }
    (lm.mode == CorrespondenceMode::point ? need_point : need_vector) = true;
    methods.push_back(std::move(lm));
  }

  const std::uint64_t ransac_base = mix_seed(spec.seed, 0x52414E53ULL);
  SweepResult result;
  for (double sigma : spec.sigma_values) {
    for (double rate : spec.outlier_values) {
      std::vector<std::vector<detail::Outcome>> outcomes(methods.size());
      for (std::size_t s = 0; s < spec.scenes_per_cell; ++s) {
        const auto id = static_cast<std::int64_t>(s);
        const std::uint64_t seed = scene_seed(spec.seed, id);
        std::optional<SceneSample> point, vec;
        if (need_point) point = generate_scene(id, seed, CorrespondenceMode::point, model, k, spec.m, sigma, rate);
        if (need_vector) vec = generate_scene(id, seed, CorrespondenceMode::vector, model, k, spec.m, sigma, rate);
        RansacConfig rc = spec.ransac;
        rc.rng_seed = mix_seed(ransac_base, static_cast<std::uint64_t>(id));

        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
          const auto& lm = methods[mi];
          const SceneSample& scene = lm.mode == CorrespondenceMode::point ? *point : *vec;
          detail::Outcome out;
          const auto t0 = std::chrono::steady_clock::now();
          std::optional<Pose> pose;
          try {
            switch (lm.spec.kind) {
              case MethodKind::epnp_ransac: pose = ransac_pnp(scene, model, MinimalSolver::epnp, rc).pose; break;
              case MethodKind::p3p_ransac: pose = ransac_pnp(scene, model, MinimalSolver::p3p, rc).pose; break;
              case MethodKind::voting: pose = voting_pnp(scene, model, rc); break;
              case MethodKind::regressor:
              case MethodKind::single_pool: pose = regressor::predict(scene, *lm.params, model.keypoints); break;
            }
          } catch (const Error&) {
            pose.reset();
          }
          const auto t1 = std::chrono::steady_clock::now();
          if (spec.record_timing) out.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
          if (pose) {
            out.error = pose_error_ratio(*pose, scene.truth, model);
            out.add = add_metric(*pose, scene.truth, model).correct;
            if (!std::isfinite(out.error)) out = {true, kFailureErrorRatio, false, out.ms};
          } else {
            out.failed = true;
          }
          outcomes[mi].push_back(out);
        }
      }
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        CellResult c;
        c.method = methods[mi].spec.label();
        c.sigma = sigma;
        c.outlier_rate = rate;
        c.n_scenes = outcomes[mi].size();
        double err = 0.0, ms = 0.0;
        std::size_t add = 0;
        for (const auto& o : outcomes[mi]) {
          err += o.error;
          ms += o.ms;
          add += o.add;
          c.n_failed += o.failed;
          c.errors.push_back(o.error);
        }
        const auto n = static_cast<double>(c.n_scenes);
        c.mean_err = err / n;
        c.median_err = median_of(c.errors);
        c.add01d_rate = static_cast<double>(add) / n;
        c.mean_ms = ms / n;
        result.cells.push_back(std::move(c));
      }
    }
  }
  return result;
}

inline constexpr const char* kResultsHeader =
    "method,sigma,outlier_rate,mean_err,median_err,add01d_rate,mean_ms,n_scenes,n_failed";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string results_csv(const SweepResult& r) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& c : r.cells) {
    out += c.method + "," + format_double(c.sigma) + "," + format_double(c.outlier_rate) + "," +
           format_double(c.mean_err) + "," + format_double(c.median_err) + "," +
           format_double(c.add01d_rate) + "," + format_double(c.mean_ms) + "," +
           std::to_string(c.n_scenes) + "," + std::to_string(c.n_failed) + "\n";
  }
  return out;
}

inline std::vector<CellResult> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kResultsHeader) throw ParseError(1, "unexpected results header");
  std::vector<CellResult> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 9) throw ParseError(line_no, "expected 9 fields");
    try {
      CellResult c;
      c.method = f[0];
      c.sigma = std::stod(f[1]);
      c.outlier_rate = std::stod(f[2]);
      c.mean_err = std::stod(f[3]);
      c.median_err = std::stod(f[4]);
      c.add01d_rate = std::stod(f[5]);
      c.mean_ms = std::stod(f[6]);
      c.n_scenes = std::stoull(f[7]);
      c.n_failed = std::stoull(f[8]);
      out.push_back(std::move(c));
    } catch (const std::logic_error&) {
      throw ParseError(line_no, "malformed number");
    }
  }
  return out;
}

struct CellSummary {
  double sigma = 0.0;
  double outlier_rate = 0.0;
  std::string best_method;
  std::optional<double> learned_mean;  // best learned method in the cell
  std::optional<double> ransac_mean;   // best RANSAC method in the cell
  std::optional<bool> learned_beats_ransac;
};

struct Report {
  std::string csv;
  std::string summary;
  std::vector<CellSummary> cells;
};

inline bool label_is_learned(const std::string& label) {
  return label.starts_with("regressor") || label.starts_with("single-pool");
}
inline bool label_is_ransac(const std::string& label) {
  return label.starts_with("epnp-ransac") || label.starts_with("p3p-ransac");
}

/// Per cell: the lowest-mean-error method, and whether the best learned model
/// beats the best RANSAC baseline. Methods are classified by label prefix.
inline Report compare_report(const std::vector<CellResult>& cells) {
  if (cells.empty()) throw InvalidArgument("empty sweep result");
  Report rep;
  rep.csv = results_csv(SweepResult{cells});
  std::vector<std::pair<double, double>> keys;
  for (const auto& c : cells) {
    const std::pair<double, double> key{c.sigma, c.outlier_rate};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  std::string text = "sigma,outlier_rate,best_method,learned_mean,ransac_mean,learned_beats_ransac\n";
  for (const auto& [sigma, rate] : keys) {
    CellSummary s{sigma, rate, "", std::nullopt, std::nullopt, std::nullopt};
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : cells) {
      if (c.sigma != sigma || c.outlier_rate != rate) continue;
      if (c.mean_err < best) {
        best = c.mean_err;
        s.best_method = c.method;
      }
      if (label_is_learned(c.method) && (!s.learned_mean || c.mean_err < *s.learned_mean)) s.learned_mean = c.mean_err;
      if (label_is_ransac(c.method) && (!s.ransac_mean || c.mean_err < *s.ransac_mean)) s.ransac_mean = c.mean_err;
    }
    if (s.learned_mean && s.ransac_mean) s.learned_beats_ransac = *s.learned_mean < *s.ransac_mean;
    text += format_double(sigma) + "," + format_double(rate) + "," + s.best_method + "," +
            (s.learned_mean ? format_double(*s.learned_mean) : "") + "," +
            (s.ransac_mean ? format_double(*s.ransac_mean) : "") + "," +
            (s.learned_beats_ransac ? (*s.learned_beats_ransac ? "yes" : "no") : "n/a") + "\n";
    rep.cells.push_back(s);
  }
  rep.summary = std::move(text);
  return rep;
}

inline Report compare_report(const SweepResult& r) { return compare_report(r.cells); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError(dir.string(), "cannot create output directory" + (ec ? ": " + ec.message() : ""));
  }
}

/// Writes results.csv and summary.csv into `dir`.
inline void write_sweep_outputs(const SweepResult& r, const std::filesystem::path& dir) {
  ensure_directory(dir);
  const Report rep = compare_report(r);
  write_text(dir / "results.csv", rep.csv);
  write_text(dir / "summary.csv", rep.summary);
}

struct DemoResult {
  std::filesystem::path out_dir;
  double initial_error_sigma3 = 0.0;
  double trained_error_sigma3 = 0.0;
  SweepResult sweep;
};

struct DemoConfig {
  std::size_t train_scenes = 500;
  std::size_t test_scenes = 100;
  std::size_t epochs = 20;
};

/// Smoke pipeline: generate, train, sweep (sigma 0 and 3, no outliers),
/// report. Failures are re-raised with the stage name.
inline DemoResult end_to_end_demo(std::uint64_t seed, const std::filesystem::path& out_dir,
                                  const DemoConfig& cfg = {}) {
  std::string stage = "setup";
  const auto run = [&](const std::string& name, auto&& fn) {
    stage = name;
    try {
      return fn();
    } catch (const IoError& e) {
      throw IoError(e.path(), "stage '" + stage + "': " + e.reason());
    } catch (const Error& e) {
      throw Error("stage '" + stage + "': " + e.what());
    }
  };
  DemoResult res;
  res.out_dir = out_dir;
  const ObjectModel model = unit_sphere_model();
  run("setup", [&] { ensure_directory(out_dir); return 0; });

  const auto train_set = run("generate", [&] {
    DatasetConfig dc;
    dc.count = cfg.train_scenes;
    dc.seed = mix_seed(seed, 1);
    auto scenes = generate_dataset(dc, model);
    write_scenes(scenes, (out_dir / "train_scenes.jsonl").string());
    return scenes;
  });

  const std::string ckpt = (out_dir / "model.ckpt").string();
  const auto trained = run("train", [&] {
    regressor::TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.seed = mix_seed(seed, 2);
    tc.checkpoint_path = ckpt;
    auto r = regressor::train(train_set, model, regressor::NetworkConfig{}, tc);
    regressor::write_train_log(r.log, (out_dir / "train_log.csv").string());
    return r;
  });

  res.sweep = run("sweep", [&] {
    SweepSpec spec;
    spec.sigma_values = {0.0, 3.0};
    spec.outlier_values = {0.0};
    spec.methods = {{MethodKind::epnp_ransac, "", ""}, {MethodKind::regressor, ckpt, ""}};
    spec.scenes_per_cell = cfg.test_scenes;
    spec.seed = mix_seed(seed, 3);
    write_text(out_dir / "sweep_spec.json", spec_to_json(spec).dump(2) + "\n");
    auto r = run_sweep(spec);
    write_sweep_outputs(r, out_dir);
    return r;
  });

  run("baseline", [&] {
    std::vector<SceneSample> test;
    const std::uint64_t test_seed = mix_seed(seed, 3);
    for (std::size_t i = 0; i < cfg.test_scenes; ++i) {
      const auto id = static_cast<std::int64_t>(i);
      test.push_back(generate_scene(id, scene_seed(test_seed, id), CorrespondenceMode::point, model,
                                    CameraIntrinsics::synthetic(), kDefaultClusterSize, 3.0, 0.0));
    }
    const auto initial = regressor::init_params<float>(trained.params.config(),
                                                       regressor::init_seed(mix_seed(seed, 2)));
    res.initial_error_sigma3 = regressor::mean_error_ratio(initial, test, model);
    res.trained_error_sigma3 = regressor::mean_error_ratio(trained.params, test, model);
    const nlohmann::json j = {{"seed", seed},
                              {"initial_error_ratio_sigma3", res.initial_error_sigma3},
                              {"trained_error_ratio_sigma3", res.trained_error_sigma3}};
    write_text(out_dir / "demo.json", j.dump(2) + "\n");
    return 0;
  });
  return res;
}

}  // namespace poseforge::harness
