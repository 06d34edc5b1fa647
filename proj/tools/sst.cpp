// sst: synthetic data generation, reconstruction runs, evaluation and scaling benchmarks.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sst/errors.hpp"
#include "sst/io.hpp"
#include "sst/pipeline.hpp"
#include "sst/surface.hpp"
#include "sst/synth.hpp"

namespace fs = std::filesystem;
using namespace sst;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitInternal = 2;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string out;
  std::string dataset;
  std::string scene;
  std::string weights;
  std::optional<int> threads;
  std::optional<int> frames;
  std::optional<int> fragment_size;
  std::string trajectory;
  std::optional<int> downsample;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--threads", o.threads, "worker threads");
  cmd->add_option("--scene", o.scene, "scene JSON (default: built-in room)");
  cmd->add_option("--frames", o.frames, "synthetic frame count");
  cmd->add_option("--trajectory", o.trajectory, "orbit | walk");
  cmd->add_option("--downsample", o.downsample, "synthetic image downsample (1 or 2)");
}

pipeline::RunConfig build_config(const Overrides& o) {
  pipeline::RunConfig cfg;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw InputError("cannot open config " + o.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw InputError("config " + o.config + ": " + e.what());
    }
    cfg = pipeline::config_from_json(j);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.mode.empty()) cfg.mode = pipeline::parse_mode(o.mode);
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (!o.dataset.empty()) cfg.dataset = o.dataset;
  if (!o.scene.empty()) cfg.scene = o.scene;
  if (!o.weights.empty()) cfg.weights = o.weights;
  if (o.threads) cfg.threads = *o.threads;
  if (o.frames) cfg.n_frames = *o.frames;
  if (o.fragment_size) cfg.fragment_size = *o.fragment_size;
  if (!o.trajectory.empty()) cfg.trajectory = o.trajectory;
  if (o.downsample) cfg.image_downsample = *o.downsample;
  cfg.validate();
  return cfg;
}

void emit(const nlohmann::json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << j.dump(2) << "\n";
}

int cmd_synth_gen(const Overrides& o) {
  if (o.out.empty()) throw InputError("synth-gen needs --out");
  pipeline::RunConfig cfg = build_config(o);
  const io::Dataset ds = pipeline::synthetic_dataset(cfg);
  io::save_dataset(o.out, ds);
  std::cout << "wrote " << ds.frames.size() << " frames to " << o.out << "\n";
  return 0;
}

int cmd_run(const Overrides& o, const std::string& save_weights) {
  pipeline::RunConfig cfg = build_config(o);
  if (!save_weights.empty()) nn::write_sstw(save_weights, pipeline::load_or_init_weights(cfg));
  const pipeline::RunResult r = pipeline::run_pipeline(cfg);
  const pipeline::StageTiming t = r.timing.total();
  std::cout << "mode " << pipeline::mode_name(cfg.mode) << ": " << r.fragments.size() << " fragments, "
            << r.mesh.vertices.size() << " vertices, " << r.mesh.triangles.size() << " triangles, "
            << r.timing.fps() << " fps (gstf " << t.gstf_ms << " ms)\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, const std::string& dataset,
             const std::string& out, const pipeline::EvalOptions& opts) {
  const surface::Mesh pred = surface::read_ply(pred_path);
  std::optional<io::Dataset> ds;
  if (!dataset.empty()) ds = io::load_dataset(dataset);
  surface::Mesh gt;
  if (!gt_path.empty()) {
    gt = surface::read_ply(gt_path);
  } else if (ds && ds->scene) {
    gt = synth::scene_mesh(*ds->scene);
  } else {
    throw InputError("eval needs --gt or a dataset with scene.json");
  }
  std::vector<geom::Camera> cams;
  std::vector<DepthMap> depths;
  if (ds) {
    for (const auto& f : ds->frames) {
      if (f.depth.width == 0) continue;
      cams.push_back({ds->K, f.pose});
      depths.push_back(f.depth);
    }
  }
  const pipeline::EvalReport r = pipeline::evaluate(pred, gt, cams, depths, opts);
  emit(pipeline::to_json(r), out);
  return 0;
}

int cmd_bench(const Overrides& o, const std::vector<double>& scales, int repeats) {
  pipeline::RunConfig cfg = build_config(o);
  const pipeline::BenchReport b = pipeline::bench(cfg, scales, repeats);
  emit(pipeline::to_json(b), o.out);
  if (!b.within_bound) {
    std::cerr << "gstf time ratio " << b.gstf_ratio << " exceeds 2.5\n";
    return kExitInternal;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental monocular reconstruction engine"};
  app.require_subcommand(1);

  Overrides synth_o, run_o, bench_o;
  auto* synth_cmd = app.add_subcommand("synth-gen", "write a synthetic dataset directory");
  add_common(synth_cmd, synth_o);
  synth_cmd->add_option("--out", synth_o.out, "dataset directory")->required();

  std::string save_weights;
  auto* run_cmd = app.add_subcommand("run", "reconstruct a dataset or synthetic scene");
  add_common(run_cmd, run_o);
  run_cmd->add_option("--mode", run_o.mode, "learned | averaging | classical");
  run_cmd->add_option("--out", run_o.out, "output directory");
  run_cmd->add_option("--dataset", run_o.dataset, "dataset directory (default: synthetic)");
  run_cmd->add_option("--weights", run_o.weights, "SSTW weight file");
  run_cmd->add_option("--fragment-size", run_o.fragment_size, "frames per fragment");
  run_cmd->add_option("--save-weights", save_weights, "write the network weights used to an SSTW file");

  std::string pred_path, gt_path, eval_dataset, eval_out;
  pipeline::EvalOptions eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "score a mesh against ground truth");
  eval_cmd->add_option("--pred", pred_path, "predicted mesh (PLY)")->required();
  eval_cmd->add_option("--gt", gt_path, "ground-truth mesh (PLY)");
  eval_cmd->add_option("--dataset", eval_dataset, "dataset with depth/ for 2D metrics and visibility");
  eval_cmd->add_option("--out", eval_out, "JSON report path (default: stdout)");
  eval_cmd->add_option("--tau", eval_opts.tau, "precision/recall threshold (m)");
  eval_cmd->add_option("--seed", eval_opts.seed, "surface sampling seed");
  eval_cmd->add_option("--threads", eval_opts.threads, "worker threads");

  std::vector<double> scales{1.0, 1.2599210498948732};
  int repeats = 3;
  auto* bench_cmd = app.add_subcommand("bench", "stage timing across scene scales");
  add_common(bench_cmd, bench_o);
  bench_cmd->add_option("--mode", bench_o.mode, "learned | averaging | classical");
  bench_cmd->add_option("--out", bench_o.out, "JSON report path (default: stdout)");
  bench_cmd->add_option("--scales", scales, "scene scale factors")->delimiter(',');
  bench_cmd->add_option("--repeats", repeats, "timed repeats per scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*synth_cmd) return cmd_synth_gen(synth_o);
    if (*run_cmd) return cmd_run(run_o, save_weights);
    if (*eval_cmd) return cmd_eval(pred_path, gt_path, eval_dataset, eval_out, eval_opts);
    if (*bench_cmd) return cmd_bench(bench_o, scales, repeats);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
