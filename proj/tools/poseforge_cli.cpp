// poseforge command-line front end.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "poseforge/poseforge.hpp"

namespace pf = poseforge;
namespace reg = poseforge::regressor;
namespace hr = poseforge::harness;

namespace {

std::pair<double, double> range_arg(const std::vector<double>& v, const char* name) {
  if (v.size() != 2) throw pf::InvalidArgument(std::string(name) + " takes exactly two values");
  return {v[0], v[1]};
}

std::string csv_number(double v) { return hr::format_double(v); }

int cmd_generate(std::size_t count, std::uint64_t seed, double sigma, double outliers, const std::string& mode,
                 std::size_t m, std::int64_t first_id, const std::string& out) {
  pf::DatasetConfig dc;
  dc.count = count;
  dc.seed = seed;
  dc.mode = pf::parse_mode(mode);
  dc.m = m;
  dc.noise_sigma = sigma;
  dc.outlier_rate = outliers;
  dc.first_id = first_id;
  pf::write_scenes(pf::generate_dataset(dc, pf::unit_sphere_model()), out);
  std::cerr << "wrote " << count << " scenes to " << out << "\n";
  return 0;
}

int cmd_solve(const std::string& scenes_path, const std::string& method, double threshold, std::size_t iters,
              std::uint64_t seed, const std::string& out) {
  const auto kind = hr::parse_method_kind(method);
  if (hr::is_learned(kind)) throw pf::InvalidArgument("use 'predict' for learned models");
  const auto scenes = pf::read_scenes(scenes_path);
  const pf::ObjectModel model = pf::unit_sphere_model();
  const auto k = pf::CameraIntrinsics::synthetic();
  pf::RansacConfig cfg;
  cfg.inlier_threshold = threshold;
  cfg.max_iterations = iters;
  cfg.validate();

  std::string csv = "scene_id,method,error_ratio,add,rep,inlier_count,wall_ms\n";
  std::size_t failed = 0;
  for (const auto& s : scenes) {
    cfg.rng_seed = pf::mix_seed(seed, static_cast<std::uint64_t>(s.scene_id));
    std::optional<pf::Pose> pose;
    std::size_t inliers = 0;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (kind == hr::MethodKind::voting) {
        pose = pf::voting_pnp(s, model, cfg);
      } else {
        const auto solver = kind == hr::MethodKind::epnp_ransac ? pf::MinimalSolver::epnp : pf::MinimalSolver::p3p;
        const auto r = pf::ransac_pnp(s, model, solver, cfg);
        pose = r.pose;
        inliers = r.inlier_count;
      }
    } catch (const pf::Error& e) {
      std::cerr << "scene " << s.scene_id << ": " << e.what() << "\n";
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    csv += std::to_string(s.scene_id) + "," + method + ",";
    if (pose) {
      csv += csv_number(pf::pose_error_ratio(*pose, s.truth, model)) + "," +
             (pf::add_metric(*pose, s.truth, model).correct ? "1" : "0") + "," +
             (pf::rep_metric(*pose, s.truth, k, model).correct ? "1" : "0") + ",";
    } else {
      ++failed;
      csv += csv_number(hr::kFailureErrorRatio) + ",0,0,";
    }
    csv += std::to_string(inliers) + "," + csv_number(ms) + "\n";
  }
  hr::write_text(out, csv);
  std::cerr << "solved " << scenes.size() << " scenes (" << failed << " failed) -> " << out << "\n";
  return failed == scenes.size() && !scenes.empty() ? 3 : 0;
}

int cmd_train(const std::string& scenes_path, std::size_t epochs, std::size_t batch, double lr,
              const std::vector<double>& sigma_range, const std::vector<double>& outlier_range, std::uint64_t seed,
              const std::string& aggregation, std::size_t checkpoint_every, const std::string& log_path,
              const std::string& out) {
  const auto scenes = pf::read_scenes(scenes_path);
  reg::TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.learning_rate = lr;
  tc.noise_sigma_range = range_arg(sigma_range, "--sigma-range");
  tc.outlier_range = range_arg(outlier_range, "--outlier-range");
  tc.seed = seed;
  tc.checkpoint_every = checkpoint_every;
  tc.checkpoint_path = out;
  reg::NetworkConfig net;
  if (reg::parse_aggregation(aggregation) == reg::Aggregation::single_pool) {
    net = reg::matched_single_pool_config(net);
  }
  const auto r = reg::train(scenes, pf::unit_sphere_model(), net, tc,
                            [](const reg::EpochLog& e, const reg::RegressorParams<float>&) {
                              std::fprintf(stderr, "epoch %zu sigma %.3f loss %.6f\n", e.epoch, e.noise_sigma,
                                           e.mean_loss);
                            });
  if (!log_path.empty()) reg::write_train_log(r.log, log_path);
  std::cerr << "checkpoint -> " << out << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& scenes_path, const std::string& out) {
  const reg::Checkpoint ck = reg::load_checkpoint(checkpoint);
  const double dev = reg::golden_deviation(ck);
  if (dev > 1e-9) {
    throw pf::IoError(checkpoint, "golden output deviates by " + csv_number(dev));
  }
  const auto scenes = pf::read_scenes(scenes_path);
  const pf::ObjectModel model = pf::unit_sphere_model();
  const auto k = pf::CameraIntrinsics::synthetic();
  std::string csv = "scene_id,qw,qx,qy,qz,tx,ty,tz,error_ratio,add,rep,wall_ms\n";
  for (const auto& s : scenes) {
    const auto t0 = std::chrono::steady_clock::now();
    const pf::Pose p = reg::predict(s, ck.params, model.keypoints);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    csv += std::to_string(s.scene_id);
    for (double v : {p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z, p.translation.x(), p.translation.y(),
                     p.translation.z()}) {
      csv += "," + csv_number(v);
    }
    csv += "," + csv_number(pf::pose_error_ratio(p, s.truth, model)) + "," +
           (pf::add_metric(p, s.truth, model).correct ? "1" : "0") + "," +
           (pf::rep_metric(p, s.truth, k, model).correct ? "1" : "0") + "," + csv_number(ms) + "\n";
  }
  hr::write_text(out, csv);
  std::cerr << "predicted " << scenes.size() << " scenes -> " << out << "\n";
  return 0;
}

int cmd_sweep(const std::string& spec_path, const std::string& out) {
  const hr::SweepSpec spec = hr::read_sweep_spec(spec_path);
  const hr::SweepResult r = hr::run_sweep(spec);
  hr::write_sweep_outputs(r, out);
  std::cout << hr::compare_report(r).summary;
  return 0;
}

int cmd_report(const std::string& in) {
  const auto cells = hr::parse_results_csv(hr::read_text(std::filesystem::path(in) / "results.csv"));
  const hr::Report rep = hr::compare_report(cells);
  hr::write_text(std::filesystem::path(in) / "summary.csv", rep.summary);
  std::cout << rep.summary;
  return 0;
}

int cmd_demo(std::uint64_t seed, const std::string& out) {
  const auto r = hr::end_to_end_demo(seed, out);
  std::cout << hr::compare_report(r.sweep).summary;
  std::cout << "initial error ratio at sigma 3: " << r.initial_error_sigma3 << "\n"
            << "trained error ratio at sigma 3: " << r.trained_error_sigma3 << "\n"
            << "artifacts in " << r.out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"poseforge: robust 6D pose from clustered 2D-3D correspondences"};
  app.require_subcommand(1);

  std::size_t count = 100, m = pf::kDefaultClusterSize;
  std::uint64_t seed = 0;
  double sigma = 0.0, outliers = 0.0;
  std::string mode = "point", out, scenes, method = "epnp-ransac", checkpoint, spec, in, aggregation = "grouped",
              log_path;
  std::int64_t first_id = 0;
  double threshold = 10.0, lr = 1e-3;
  std::size_t iters = 1000, epochs = 300, batch = 32, checkpoint_every = 0;
  std::vector<double> sigma_range{0.0, 15.0}, outlier_range{0.0, 0.3};

  auto* gen = app.add_subcommand("generate", "Generate synthetic scenes (JSON lines)");
  gen->add_option("--count", count, "Number of scenes")->capture_default_str();
  gen->add_option("--seed", seed, "Dataset seed")->capture_default_str();
  gen->add_option("--sigma", sigma, "2D noise standard deviation (px)")->capture_default_str();
  gen->add_option("--outliers", outliers, "Outlier fraction per cluster")->capture_default_str();
  gen->add_option("--mode", mode, "point or vector")->capture_default_str();
  gen->add_option("--m", m, "Members per cluster")->capture_default_str();
  gen->add_option("--first-id", first_id, "First scene id")->capture_default_str();
  gen->add_option("--out", out, "Output file")->required();

  auto* solve = app.add_subcommand("solve", "Run a classical solver over a scene file");
  solve->add_option("--scenes", scenes, "Scene file")->required();
  solve->add_option("--method", method, "epnp-ransac, p3p-ransac or voting")->capture_default_str();
  solve->add_option("--threshold", threshold, "Inlier threshold (px)")->capture_default_str();
  solve->add_option("--iters", iters, "Maximum RANSAC iterations")->capture_default_str();
  solve->add_option("--seed", seed, "RANSAC seed")->capture_default_str();
  solve->add_option("--out", out, "Output CSV")->required();

  auto* tr = app.add_subcommand("train", "Train the pose regressor");
  tr->add_option("--scenes", scenes, "Training scene file")->required();
  tr->add_option("--epochs", epochs)->capture_default_str();
  tr->add_option("--batch", batch)->capture_default_str();
  tr->add_option("--lr", lr)->capture_default_str();
  tr->add_option("--sigma-range", sigma_range, "Noise range (two values)")->expected(2)->capture_default_str();
  tr->add_option("--outlier-range", outlier_range, "Outlier range (two values)")->expected(2)->capture_default_str();
  tr->add_option("--seed", seed)->capture_default_str();
  tr->add_option("--aggregation", aggregation, "grouped or single-pool")->capture_default_str();
  tr->add_option("--checkpoint-every", checkpoint_every, "Also checkpoint every K epochs")->capture_default_str();
  tr->add_option("--log", log_path, "Per-epoch CSV log");
  tr->add_option("--out", out, "Checkpoint path")->required();

  auto* pred = app.add_subcommand("predict", "Run a trained checkpoint over a scene file");
  pred->add_option("--checkpoint", checkpoint)->required();
  pred->add_option("--scenes", scenes)->required();
  pred->add_option("--out", out, "Output CSV")->required();

  auto* sw = app.add_subcommand("sweep", "Noise / outlier sweep over several methods");
  sw->add_option("--spec", spec, "Sweep spec JSON")->required();
  sw->add_option("--out", out, "Output directory")->required();

  auto* rep = app.add_subcommand("report", "Summarize a sweep directory");
  rep->add_option("--in", in, "Sweep output directory")->required();

  auto* demo = app.add_subcommand("demo", "Small end-to-end run");
  demo->add_option("--seed", seed)->capture_default_str();
  out = "demo_out";
  demo->add_option("--out", out, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_generate(count, seed, sigma, outliers, mode, m, first_id, out);
    if (*solve) return cmd_solve(scenes, method, threshold, iters, seed, out);
    if (*tr) {
      return cmd_train(scenes, epochs, batch, lr, sigma_range, outlier_range, seed, aggregation, checkpoint_every,
                       log_path, out);
    }
    if (*pred) return cmd_predict(checkpoint, scenes, out);
    if (*sw) return cmd_sweep(spec, out);
    if (*rep) return cmd_report(in);
    if (*demo) return cmd_demo(seed, out);
  } catch (const pf::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const pf::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const pf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
