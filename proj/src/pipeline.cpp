#include "sst/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "sst/encode.hpp"
#include "sst/errors.hpp"
#include "sst/synth.hpp"

namespace sst::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

DepthSource parse_depth_source(const std::string& s) {
  if (s == "dense") return DepthSource::kDense;
  if (s == "sparse") return DepthSource::kSparse;
  throw InputError("unknown depth source '" + s + "' (dense | sparse)");
}

synth::TrajectoryMode parse_trajectory(const std::string& s) {
  if (s == "orbit") return synth::TrajectoryMode::kOrbit;
  if (s == "walk") return synth::TrajectoryMode::kWalk;
  throw InputError("unknown trajectory '" + s + "' (orbit | walk)");
}

std::vector<geom::Camera> cameras_of(const io::Dataset& ds, int begin, int end) {
  std::vector<geom::Camera> cams;
  for (int i = begin; i < end; ++i) cams.push_back({ds.K, ds.frames[i].pose});
  return cams;
}

void run_network(const io::Dataset& ds, const RunConfig& cfg, const nn::WeightStore& weights, RunResult& r) {
  const encode::ChannelPlan plan;
  const encode::ImageEncoder image_encoder(weights, plan);
  const encode::PriorEncoder prior_encoder(weights, plan);
  std::vector<lstf::CrossModalAttention> attention;
  std::vector<gstf::LevelFusion> fusion;
  for (int l = 0; l < volume::kLevels; ++l) {
    attention.emplace_back(weights, l, plan.fused(l), plan.color[l]);
    fusion.emplace_back(weights, l, plan.color[l]);
  }
  const lstf::FusionMode fusion_mode =
      cfg.mode == Mode::kAveraging ? lstf::FusionMode::kAveraging : lstf::FusionMode::kAttention;
  gstf::GlobalModel model;

  for (const auto& [begin, end] : r.fragments) {
    StageTiming t;
    const std::vector<geom::Camera> cams = cameras_of(ds, begin, end);
    std::vector<encode::FeaturePyramid> color, geometry;
    std::vector<priors::GeometryPrior> prior_maps;
    auto t0 = Clock::now();
    for (int i = begin; i < end; ++i) {
      const io::Frame& f = ds.frames[i];
      try {
        prior_maps.push_back(priors::make_prior(f.sparse_depth, f.error, cfg.lambda_conf, cfg.max_depth));
        color.push_back(image_encoder.encode(f.image, cfg.threads));
        geometry.push_back(prior_encoder.encode(prior_maps.back(), cfg.max_depth, cfg.threads));
      } catch (const std::invalid_argument& e) {
        throw InputError("frame " + std::to_string(i) + ": " + e.what());
      }
    }
    t.encode_ms = ms_since(t0);

    double provider_ms = 0.0;
    const gstf::FragmentFeatureProvider provider = [&](int level, const volume::KeyList& candidates) {
      auto p0 = Clock::now();
      std::vector<encode::BackprojectedView> views;
      views.reserve(cams.size());
      for (std::size_t v = 0; v < cams.size(); ++v) {
        views.push_back(encode::backproject_features(color[v][level], geometry[v][level], ds.K, cams[v].pose,
                                                     candidates, cfg.grid));
      }
      const double bp = ms_since(p0);
      auto p1 = Clock::now();
      const Eigen::MatrixXd w =
          lstf::explicit_weights_for_fragment(candidates, prior_maps, cams, cfg.grid, cfg.explicit_weight);
      volume::FeatureVolume fv =
          lstf::fuse_fragment(candidates, views, w, attention[level], fusion_mode, cfg.threads);
      const double ls = ms_since(p1);
      t.backproject_ms += bp;
      t.lstf_ms += ls;
      provider_ms += bp + ls;
      return fv;
    };

    t0 = Clock::now();
    const volume::KeyList coarse = volume::allocate_fragment_keys(cfg.grid, 0, cams, cfg.max_depth);
    gstf::FragmentReport report =
        gstf::fuse_fragment_global(coarse, provider, fusion, model, cfg.theta, cfg.threads);
    t.gstf_ms = std::max(0.0, ms_since(t0) - provider_ms);
    for (const auto& level : report.levels) r.active_voxels += level.active.size();
    r.fragment_reports.push_back(std::move(report));
    r.timing.fragments.push_back(t);
  }

  const auto t0 = Clock::now();
  // Only voxels the finest occupancy head keeps take part in meshing.
  volume::SparseVolume<volume::TsdfVoxel> kept(volume::kFinestLevel);
  for (const auto& [k, v] : model.tsdf[volume::kFinestLevel]) {
    const float* occ = model.occupancy[volume::kFinestLevel].find(k);
    if (occ && *occ >= cfg.theta) kept.insert_or_assign(k, v);
  }
  r.mesh = surface::marching_cubes(kept, cfg.grid);
  r.timing.surface_ms = ms_since(t0);
  for (int l = 0; l < volume::kLevels; ++l) r.tsdf[l] = std::move(model.tsdf[l]);
}

void run_classical(const io::Dataset& ds, const RunConfig& cfg, RunResult& r) {
  volume::SparseVolume<volume::TsdfVoxel> global(volume::kFinestLevel);
  const gstf::ClassicalFusionOptions opts{cfg.truncation, cfg.max_depth, cfg.threads};
  for (const auto& [begin, end] : r.fragments) {
    StageTiming t;
    std::vector<gstf::DepthView> views;
    for (int i = begin; i < end; ++i) {
      const io::Frame& f = ds.frames[i];
      const DepthMap& d = cfg.depth_source == DepthSource::kDense ? f.depth : f.sparse_depth;
      if (d.width != ds.K.width || d.height != ds.K.height) {
        throw InputError("frame " + std::to_string(i) + ": no depth map for classical fusion");
      }
      views.push_back({{ds.K, f.pose}, d});
    }
    const auto t0 = Clock::now();
    r.active_voxels += gstf::classical_fusion_step(views, global, cfg.grid, opts);
    t.gstf_ms = ms_since(t0);
    r.timing.fragments.push_back(t);
  }
  const auto t0 = Clock::now();
  surface::MarchingCubesOptions mc;
  mc.missing = surface::MissingCorner::kSkipCube;
  r.mesh = surface::marching_cubes(global, cfg.grid, mc);
  r.timing.surface_ms = ms_since(t0);
  r.tsdf[volume::kFinestLevel] = std::move(global);
}

}  // namespace

Mode parse_mode(const std::string& s) {
  if (s == "learned") return Mode::kLearned;
  if (s == "averaging" || s == "averaging-ablation") return Mode::kAveraging;
  if (s == "classical" || s == "classical-oracle") return Mode::kClassical;
  throw InputError("unknown mode '" + s + "' (learned | averaging | classical)");
}

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kLearned: return "learned";
    case Mode::kAveraging: return "averaging";
    case Mode::kClassical: return "classical";
  }
  return "?";
}

void RunConfig::validate() const {
  if (fragment_size < 1) throw InputError("fragment size must be >= 1");
  if (!grid.valid()) throw InputError("voxel sizes must be positive and halve per level");
  if (!(truncation > 0.0)) throw InputError("truncation must be positive");
  if (!(theta > 0.0 && theta < 1.0)) throw InputError("theta must lie in (0, 1)");
  if (!(lambda_conf > 0.0)) throw InputError("lambda_conf must be positive");
  if (!(explicit_weight.sigma_base > 0.0) || !(explicit_weight.error_ref > 0.0)) {
    throw InputError("sigma_base and error_ref must be positive");
  }
  if (!(max_depth > 0.0)) throw InputError("max_depth must be positive");
  if (threads < 1) throw InputError("threads must be >= 1");
  if (n_frames < 0) throw InputError("n_frames must be non-negative");
  if (image_downsample != 1 && image_downsample != 2) throw InputError("image_downsample must be 1 or 2");
  if (!(scene_scale > 0.0)) throw InputError("scene_scale must be positive");
}

RunConfig config_from_json(const nlohmann::json& j, RunConfig c) {
  try {
    read_opt(j, "dataset", c.dataset);
    read_opt(j, "scene", c.scene);
    read_opt(j, "n_frames", c.n_frames);
    read_opt(j, "trajectory", c.trajectory);
    read_opt(j, "image_downsample", c.image_downsample);
    read_opt(j, "fragment_size", c.fragment_size);
    if (j.contains("voxel_sizes")) {
      const auto v = j.at("voxel_sizes").get<std::vector<double>>();
      if (v.size() != volume::kLevels) throw InputError("voxel_sizes needs 3 entries");
      for (int l = 0; l < volume::kLevels; ++l) c.grid.voxel_size[l] = v[l];
    }
    read_opt(j, "truncation", c.truncation);
    read_opt(j, "theta", c.theta);
    read_opt(j, "lambda_conf", c.lambda_conf);
    read_opt(j, "sigma_base", c.explicit_weight.sigma_base);
    read_opt(j, "error_ref", c.explicit_weight.error_ref);
    read_opt(j, "max_depth", c.max_depth);
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("depth_source")) c.depth_source = parse_depth_source(j.at("depth_source").get<std::string>());
    read_opt(j, "weights", c.weights);
    read_opt(j, "seed", c.seed);
    read_opt(j, "out_dir", c.out_dir);
    read_opt(j, "threads", c.threads);
    read_opt(j, "scene_scale", c.scene_scale);
    if (j.contains("prior")) {
      const auto& p = j.at("prior");
      read_opt(p, "n_points", c.prior.n_points);
      read_opt(p, "depth_noise_sigma", c.prior.depth_noise_sigma);
      read_opt(p, "error_scale", c.prior.error_scale);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

nlohmann::json config_to_json(const RunConfig& c) {
  return {
      {"dataset", c.dataset},
      {"scene", c.scene},
      {"n_frames", c.n_frames},
      {"trajectory", c.trajectory},
      {"image_downsample", c.image_downsample},
      {"fragment_size", c.fragment_size},
      {"voxel_sizes", std::vector<double>(c.grid.voxel_size.begin(), c.grid.voxel_size.end())},
      {"truncation", c.truncation},
      {"theta", c.theta},
      {"lambda_conf", c.lambda_conf},
      {"sigma_base", c.explicit_weight.sigma_base},
      {"error_ref", c.explicit_weight.error_ref},
      {"max_depth", c.max_depth},
      {"mode", mode_name(c.mode)},
      {"depth_source", c.depth_source == DepthSource::kDense ? "dense" : "sparse"},
      {"weights", c.weights},
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"threads", c.threads},
      {"scene_scale", c.scene_scale},
      {"prior",
       {{"n_points", c.prior.n_points},
        {"depth_noise_sigma", c.prior.depth_noise_sigma},
        {"error_scale", c.prior.error_scale}}},
  };
}

std::vector<std::pair<int, int>> schedule_fragments(int n_frames, int fragment_size) {
  if (n_frames <= 0) throw InputError("empty sequence");
  if (fragment_size < 1) throw InputError("fragment size must be >= 1");
  std::vector<std::pair<int, int>> out;
  for (int b = 0; b < n_frames; b += fragment_size) out.emplace_back(b, std::min(n_frames, b + fragment_size));
  return out;
}

StageTiming TimingReport::total() const {
  StageTiming s;
  for (const auto& f : fragments) {
    s.encode_ms += f.encode_ms;
    s.backproject_ms += f.backproject_ms;
    s.lstf_ms += f.lstf_ms;
    s.gstf_ms += f.gstf_ms;
  }
  s.surface_ms = surface_ms;
  return s;
}

nlohmann::json to_json(const TimingReport& t) {
  const auto stage = [](const StageTiming& s) {
    return nlohmann::json{{"encode_ms", s.encode_ms},
                          {"backproject_ms", s.backproject_ms},
                          {"lstf_ms", s.lstf_ms},
                          {"gstf_ms", s.gstf_ms},
                          {"surface_ms", s.surface_ms}};
  };
  nlohmann::json frags = nlohmann::json::array();
  for (const auto& f : t.fragments) frags.push_back(stage(f));
  return {{"fragments", frags}, {"total", stage(t.total())}, {"wall_ms", t.wall_ms},
          {"frames", t.frames},  {"fps", t.fps()}};
}

io::Dataset synthetic_dataset(const RunConfig& cfg) {
  synth::Scene scene = cfg.scene.empty() ? synth::standard_room() : synth::load_scene(cfg.scene);
  if (cfg.scene_scale != 1.0) scene = scene.scaled(cfg.scene_scale);
  io::SyntheticOptions opts;
  opts.n_frames = cfg.n_frames;
  opts.trajectory = parse_trajectory(cfg.trajectory);
  opts.trajectory_options.max_step_m *= cfg.scene_scale;
  const geom::Intrinsics full = synth::default_intrinsics();
  const double d = cfg.image_downsample;
  opts.K = geom::Intrinsics::make(full.fx / d, full.fy / d, full.cx / d, full.cy / d,
                                  full.width / cfg.image_downsample, full.height / cfg.image_downsample);
  opts.prior = cfg.prior;
  opts.seed = cfg.seed;
  opts.threads = cfg.threads;
  if (cfg.n_frames == 0) {
    io::Dataset empty;
    empty.K = opts.K;
    empty.scene = scene;
    return empty;
  }
  return io::make_synthetic_dataset(scene, opts);
}

nn::WeightStore load_or_init_weights(const RunConfig& cfg) {
  if (!cfg.weights.empty()) return nn::read_sstw(cfg.weights);
  nn::WeightStore store;
  const encode::ChannelPlan plan;
  encode::init_encoder_weights(store, plan, cfg.seed);
  lstf::init_lstf_weights(store, plan, cfg.seed);
  gstf::init_gstf_weights(store, plan, cfg.seed);
  return store;
}

RunResult run(const io::Dataset& ds, const RunConfig& cfg) {
  if (cfg.mode == Mode::kClassical) return run(ds, cfg, nn::WeightStore{});
  return run(ds, cfg, load_or_init_weights(cfg));
}

RunResult run(const io::Dataset& ds, const RunConfig& cfg, const nn::WeightStore& weights) {
  cfg.validate();
  const auto t0 = Clock::now();
  RunResult r;
  r.fragments = schedule_fragments(static_cast<int>(ds.frames.size()), cfg.fragment_size);
  if (cfg.mode == Mode::kClassical) {
    run_classical(ds, cfg, r);
  } else {
    if (ds.K.width % 4 != 0 || ds.K.height % 4 != 0) throw InputError("image size must be divisible by 4");
    try {
      run_network(ds, cfg, weights, r);
    } catch (const std::invalid_argument& e) {
      // Missing or misshapen layers in a user-supplied weight file.
      if (!cfg.weights.empty()) throw InputError(std::string("weights: ") + e.what());
      throw;
    }
  }
  r.timing.frames = static_cast<int>(ds.frames.size());
  r.timing.wall_ms = ms_since(t0);
  return r;
}

void write_outputs(const std::string& dir, const RunConfig& cfg, const RunResult& r) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  surface::write_ply((root / "mesh.ply").string(), r.mesh);
  for (int l = 0; l < volume::kLevels; ++l) {
    volume::write_sstv((root / ("volume_l" + std::to_string(l) + ".sstv")).string(), cfg.grid, r.tsdf[l]);
  }
  std::ofstream timing(root / "timing.json");
  timing << to_json(r.timing).dump(2) << "\n";

  nlohmann::json report;
  report["config"] = config_to_json(cfg);
  nlohmann::json frags = nlohmann::json::array();
  for (std::size_t i = 0; i < r.fragments.size(); ++i) {
    nlohmann::json f{{"begin", r.fragments[i].first}, {"end", r.fragments[i].second}};
    if (i < r.fragment_reports.size()) {
      nlohmann::json levels = nlohmann::json::array();
      for (const auto& lr : r.fragment_reports[i].levels) {
        levels.push_back({{"candidates", lr.candidates.size()}, {"active", lr.active.size()}, {"occupied", lr.occupied.size()}});
      }
      f["levels"] = levels;
    }
    frags.push_back(f);
  }
  report["fragments"] = frags;
  report["active_voxels"] = r.active_voxels;
  report["mesh"] = {{"vertices", r.mesh.vertices.size()}, {"triangles", r.mesh.triangles.size()}};
  std::ofstream out(root / "report.json");
  out << report.dump(2) << "\n";
  if (!out || !timing) throw InputError("cannot write outputs to " + dir);
}

RunResult run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const io::Dataset ds = cfg.dataset.empty() ? synthetic_dataset(cfg) : io::load_dataset(cfg.dataset);
  RunResult r = run(ds, cfg);
  if (!cfg.out_dir.empty()) write_outputs(cfg.out_dir, cfg, r);
  return r;
}

std::vector<Vec3> filter_observed(std::span<const Vec3> points, std::span<const geom::Camera> cameras,
                                  std::span<const DepthMap> depths, double max_depth, double margin) {
  if (cameras.size() != depths.size()) throw std::invalid_argument("filter_observed: cameras/depths mismatch");
  std::vector<Vec3> out;
  for (const Vec3& p : points) {
    for (std::size_t v = 0; v < cameras.size(); ++v) {
      const auto proj = geom::project(cameras[v].K, cameras[v].pose, p);
      if (!proj || proj->depth > max_depth) continue;
      const DepthMap& d = depths[v];
      const int x = static_cast<int>(proj->pixel.u);
      const int y = static_cast<int>(proj->pixel.v);
      if (!d.in_bounds(x, y)) continue;
      // A ray with no return is free space all the way, so the point is seen.
      if (!has_depth(d(x, y)) || proj->depth <= d(x, y) + margin) {
        out.push_back(p);
        break;
      }
    }
  }
  return out;
}

EvalReport evaluate(const surface::Mesh& pred, const surface::Mesh& gt, std::span<const geom::Camera> cameras,
                    std::span<const DepthMap> gt_depths, const EvalOptions& opts) {
  if (pred.empty()) throw InputError("evaluate: empty predicted mesh");
  if (gt.empty()) throw InputError("evaluate: empty ground-truth mesh");
  if (cameras.size() != gt_depths.size()) throw std::invalid_argument("evaluate: cameras/depths mismatch");
  std::vector<Vec3> gt_pts = eval::sample_points(gt, opts.density, opts.seed);
  std::vector<Vec3> pred_pts = eval::sample_points(pred, opts.density, opts.seed + 1);
  if (opts.filter_visible && !cameras.empty()) {
    gt_pts = filter_observed(gt_pts, cameras, gt_depths, opts.max_depth, opts.visibility_margin);
    pred_pts = filter_observed(pred_pts, cameras, gt_depths, opts.max_depth, opts.visibility_margin);
  }
  if (gt_pts.empty() || pred_pts.empty()) throw InputError("evaluate: no observed surface samples");
  EvalReport r;
  r.pred_points = pred_pts.size();
  r.gt_points = gt_pts.size();
  r.metrics_3d = eval::metrics_3d(pred_pts, gt_pts, opts.tau, opts.threads);

  const surface::Raycaster caster(pred);
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    const DepthMap rendered = caster.render_depth(cameras[v].K, cameras[v].pose, opts.threads);
    if (std::none_of(gt_depths[v].data.begin(), gt_depths[v].data.end(), [](double d) { return d > 0.0; })) continue;
    r.per_view.push_back(eval::metrics_2d(rendered, gt_depths[v]));
  }
  r.mean_2d = eval::average(r.per_view);
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j = eval::to_json(r.metrics_3d);
  j.update(eval::to_json(r.mean_2d));
  nlohmann::json views = nlohmann::json::array();
  for (const auto& v : r.per_view) views.push_back(eval::to_json(v));
  j["per_view"] = views;
  j["pred_points"] = r.pred_points;
  j["gt_points"] = r.gt_points;
  return j;
}

BenchReport bench(const RunConfig& cfg, const std::vector<double>& scales, int repeats) {
  if (scales.size() < 2) throw InputError("bench needs at least two scene scales");
  if (repeats < 1) throw InputError("bench repeats must be >= 1");
  BenchReport b;
  for (const double s : scales) {
    if (!(s > 0.0)) throw InputError("bench scales must be positive");
    RunConfig c = cfg;
    c.scene_scale = cfg.scene_scale * s;
    c.max_depth = cfg.max_depth * s;
    c.out_dir.clear();
    const io::Dataset ds = synthetic_dataset(c);
    const nn::WeightStore weights = c.mode == Mode::kClassical ? nn::WeightStore{} : load_or_init_weights(c);
    BenchRow row;
    row.scale = s;
    row.gstf_ms = std::numeric_limits<double>::infinity();
    const double inf = std::numeric_limits<double>::infinity();
    row.stages = {inf, inf, inf, inf, inf};
    for (int rep = 0; rep < repeats; ++rep) {
      const RunResult r = run(ds, c, weights);
      const StageTiming t = r.timing.total();
      row.active_voxels = r.active_voxels;
      row.gstf_ms = std::min(row.gstf_ms, t.gstf_ms);
      row.stages.encode_ms = std::min(row.stages.encode_ms, t.encode_ms);
      row.stages.backproject_ms = std::min(row.stages.backproject_ms, t.backproject_ms);
      row.stages.lstf_ms = std::min(row.stages.lstf_ms, t.lstf_ms);
      row.stages.gstf_ms = std::min(row.stages.gstf_ms, t.gstf_ms);
      row.stages.surface_ms = std::min(row.stages.surface_ms, t.surface_ms);
    }
    b.rows.push_back(row);
  }
  const BenchRow& first = b.rows.front();
  const BenchRow& last = b.rows.back();
  b.voxel_ratio = first.active_voxels > 0 ? static_cast<double>(last.active_voxels) / first.active_voxels : 0.0;
  b.gstf_ratio = first.gstf_ms > 0.0 ? last.gstf_ms / first.gstf_ms : 0.0;
  b.within_bound = b.gstf_ratio <= 2.5;
  return b;
}

nlohmann::json to_json(const BenchReport& b) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : b.rows) {
    rows.push_back({{"scale", r.scale},
                    {"active_voxels", r.active_voxels},
                    {"gstf_ms", r.gstf_ms},
                    {"encode_ms", r.stages.encode_ms},
                    {"backproject_ms", r.stages.backproject_ms},
                    {"lstf_ms", r.stages.lstf_ms},
                    {"surface_ms", r.stages.surface_ms}});
  }
  return {{"rows", rows},
          {"voxel_ratio", b.voxel_ratio},
          {"gstf_ratio", b.gstf_ratio},
          {"gstf_ratio_bound", 2.5},
          {"within_bound", b.within_bound}};
}

}  // namespace sst::pipeline
