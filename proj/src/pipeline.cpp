#include "snp/pipeline.hpp"

#include "snp/error.hpp"
#include "snp/image.hpp"
#include "snp/io.hpp"
#include "snp/metrics.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>

namespace snp {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string secs(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void require_path(const fs::path& p, const std::string& key) {
  SNP_CHECK(!p.empty(), ErrorCode::InvalidArgument, "missing required path: paths." + key);
  SNP_CHECK(fs::exists(p), ErrorCode::Io, "paths." + key + " does not exist: " + p.string());
}

void require_output(const fs::path& p) {
  SNP_CHECK(!p.empty(), ErrorCode::InvalidArgument, "missing required path: paths.output");
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// Merges `patch` into `base`, refusing keys that `base` does not have.
void merge_checked(json& base, const json& patch, const std::string& prefix) {
  SNP_CHECK(patch.is_object(), ErrorCode::InvalidArgument,
            "config section '" + (prefix.empty() ? std::string("<root>") : prefix) + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    SNP_CHECK(base.contains(key), ErrorCode::InvalidArgument, "unknown config key '" + full + "'");
    if (base[key].is_object())
      merge_checked(base[key], value, full);
    else
      base[key] = value;
  }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config key '") + section + "." + key + "': " + e.what());
  }
}

double get_depth(const json& j, const char* section, const char* key) {
  const json& v = j.at(section).at(key);
  if (v.is_null() || (v.is_string() && v.get<std::string>() == "inf")) return std::numeric_limits<double>::infinity();
  return get<double>(j, section, key);
}

json depth_to_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

fs::path resolve(const std::string& p, const fs::path& base) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

StageLogger& logger() {
  static StageLogger l = [](const std::string& line) { std::cerr << line << '\n'; };
  return l;
}

std::vector<Camera> load_cameras(const fs::path& p, const std::string& key) {
  require_path(p, key);
  return read_cameras(p);
}

std::vector<DepthMap> load_maps(const PipelineConfig& c) {
  const auto cameras = load_cameras(c.paths.cameras, "cameras");
  require_path(c.paths.depth_dir, "depth_dir");
  auto maps = read_depth_dir(c.paths.depth_dir, cameras);
  SNP_CHECK(!maps.empty(), ErrorCode::EmptyInput, "no *.pfm depth maps in " + c.paths.depth_dir.string());
  return maps;
}

FeaturizedPointCloud load_input(const PipelineConfig& c) {
  require_path(c.paths.input, "input");
  PlyReadOptions opts;
  opts.default_feature_dim = c.feature_dim;
  opts.default_radius = c.point_radius;
  return read_ply(c.paths.input, opts);
}

void write_text(const fs::path& p, const std::string& text) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary);
  SNP_CHECK(out.good(), ErrorCode::Io, "cannot write " + p.string());
  out << text;
  SNP_CHECK(out.good(), ErrorCode::Io, "write failed: " + p.string());
}

void write_cloud(const fs::path& p, const FeaturizedPointCloud& cloud) {
  ensure_parent(p);
  write_ply(p, cloud);
}

std::string sculpt_report_csv(const SculptReport& r) {
  std::ostringstream o;
  o << "n_input,pruned,n_after_prune,triggering_pixels,added,n_output,delta_e\n"
    << r.n_input << ',' << r.pruned << ',' << r.n_after_prune << ',' << r.triggering_pixels << ',' << r.added
    << ',' << r.n_output << ',' << num(r.delta_e) << '\n';
  return o.str();
}

SculptResult sculpt_stage(const PipelineConfig& c, const SculptConfig& sc, const char* stage) {
  require_output(c.paths.output);
  const auto t0 = std::chrono::steady_clock::now();
  const auto cloud = load_input(c);
  const auto maps = load_maps(c);
  std::vector<TrainView> views;
  if (sc.add_points) views = load_views(c.paths.cameras, c.paths.images_dir);
  OutputLock lock(c.paths.output);
  auto result = sculpt(cloud, maps, views, c.train_render(), sc);
  write_cloud(c.paths.output, result.cloud);
  write_text(sibling(c.paths.output, "_report.txt"), format_sculpt_report(result.report));
  write_text(sibling(c.paths.output, "_report.csv"), sculpt_report_csv(result.report));
  const auto& r = result.report;
  log_stage(stage, {{"n_input", std::to_string(r.n_input)},
                    {"pruned", std::to_string(r.pruned)},
                    {"triggering_pixels", std::to_string(r.triggering_pixels)},
                    {"added", std::to_string(r.added)},
                    {"n_output", std::to_string(r.n_output)},
                    {"seconds", secs(seconds_since(t0))}});
  return result;
}

std::pair<double, double> evaluate(const FeaturizedPointCloud& cloud, std::span<const Camera> cameras,
                                   std::span<const Image> images, const RenderConfig& render) {
  if (cameras.empty()) return {0.0, 0.0};
  double p = 0.0, s = 0.0;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const Image img = rasterize_ensemble(cloud, cameras[i], render).image;
    p += psnr(img, images[i]);
    s += img.width >= 11 && img.height >= 11 ? ssim(img, images[i]) : 0.0;
  }
  return {p / cameras.size(), s / cameras.size()};
}

Mat3 rotation_from(const json& step) {
  if (step.contains("rotation")) {
    const auto r = step.at("rotation").get<std::vector<double>>();
    SNP_CHECK(r.size() == 9, ErrorCode::InvalidArgument, "rotation needs 9 values");
    Mat3 m;
    m << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
    SNP_CHECK((m.transpose() * m - Mat3::Identity()).norm() < 1e-9 && m.determinant() > 0,
              ErrorCode::InvalidArgument, "rotation is not orthonormal");
    return m;
  }
  if (step.contains("axis_angle")) {
    const auto a = step.at("axis_angle").get<std::vector<double>>();
    SNP_CHECK(a.size() == 4, ErrorCode::InvalidArgument, "axis_angle needs [x, y, z, radians]");
    const Vec3 axis(a[0], a[1], a[2]);
    SNP_CHECK(axis.norm() > 0, ErrorCode::InvalidArgument, "axis_angle axis is zero");
    return Eigen::AngleAxisd(a[3], axis.normalized()).toRotationMatrix();
  }
  return Mat3::Identity();
}

Vec3 vec3_from(const json& v, const char* what) {
  const auto a = v.get<std::vector<double>>();
  SNP_CHECK(a.size() == 3, ErrorCode::InvalidArgument, std::string(what) + " needs 3 values");
  return {a[0], a[1], a[2]};
}

PointSelector selector_from(const json& w) {
  SNP_CHECK(w.is_object(), ErrorCode::InvalidArgument, "'where' must be an object");
  if (w.contains("all")) return [](std::size_t, const Vec3&) { return true; };
  if (w.contains("axis")) {
    const std::string axis = w.at("axis").get<std::string>();
    SNP_CHECK(axis == "x" || axis == "y" || axis == "z", ErrorCode::InvalidArgument, "axis must be x, y or z");
    const int k = axis[0] - 'x';
    if (w.contains("less")) {
      const double t = w.at("less").get<double>();
      return [k, t](std::size_t, const Vec3& p) { return p[k] < t; };
    }
    SNP_CHECK(w.contains("greater"), ErrorCode::InvalidArgument, "axis selector needs 'less' or 'greater'");
    const double t = w.at("greater").get<double>();
    return [k, t](std::size_t, const Vec3& p) { return p[k] > t; };
  }
  if (w.contains("ball")) {
    const Vec3 c = vec3_from(w.at("ball").at("center"), "ball center");
    const double r = w.at("ball").at("radius").get<double>();
    return [c, r](std::size_t, const Vec3& p) { return (p - c).squaredNorm() <= r * r; };
  }
  if (w.contains("box")) {
    const Vec3 lo = vec3_from(w.at("box").at("min"), "box min");
    const Vec3 hi = vec3_from(w.at("box").at("max"), "box max");
    return [lo, hi](std::size_t, const Vec3& p) {
      return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    };
  }
  throw Error(ErrorCode::InvalidArgument, "unknown 'where' selector: " + w.dump());
}

std::string frame_name(int i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.%s", i, ext);
  return buf;
}

}  // namespace

// ---- config ---------------------------------------------------------------

RenderConfig PipelineConfig::train_render() const {
  RenderConfig r = render;
  if (ablation.no_dropout) r.dropout_rate = 0.0;
  return r;
}

RenderConfig PipelineConfig::inference_render() const {
  RenderConfig r = render;
  if (ablation.no_dropout) {
    r.dropout_rate = 0.0;
    r.subsets = 1;
  }
  return r;
}

TrainConfig PipelineConfig::effective_train() const {
  TrainConfig t = train;
  if (ablation.freeze_geometry) t.freeze_positions = true;
  if (ablation.no_dropout) t.dropout = false;
  return t;
}

SculptConfig PipelineConfig::effective_sculpt() const {
  SculptConfig s = sculpt;
  if (ablation.no_prune) s.prune = false;
  if (ablation.no_add) s.add_points = false;
  return s;
}

json default_config_json() {
  const RenderConfig r;
  const TrainConfig t;
  const SculptConfig s;
  return {
      {"paths",
       {{"cameras", ""}, {"depth_dir", ""}, {"images_dir", ""}, {"heldout_cameras", ""},
        {"heldout_images_dir", ""}, {"render_cameras", ""}, {"input", ""}, {"output", ""}, {"script", ""}}},
      {"model", {{"feature_dim", 27}, {"point_radius", 0.045}}},
      {"render",
       {{"gamma", r.gamma},
        {"radius", nullptr},
        {"dropout_rate", r.dropout_rate},
        {"subsets", r.subsets},
        {"background", json::array()},
        {"z_near", r.z_near},
        {"z_far", r.z_far},
        {"seed", r.seed},
        {"view_directions", "per-point"},
        {"max_contributors", r.max_contributors},
        {"tile_size", r.tile_size}}},
      {"sculpt",
       {{"delta_d", s.delta_d},
        {"delta_e_factor", s.add.delta_e_factor},
        {"max_per_pixel", s.add.max_per_pixel},
        {"n_bins", s.add.bounds.n_bins},
        {"sampling", "linear"},
        {"z_near", s.add.bounds.z_near},
        {"z_far", s.add.bounds.z_far},
        {"eps_occ", s.add.eps_occ},
        {"rounds", s.rounds},
        {"fit_steps", 500},
        {"fit_seed", 1}}},
      {"optimizer",
       {{"steps", t.steps},
        {"lr_features", t.lr.features},
        {"lr_positions", t.lr.positions},
        {"lr_opacity", t.lr.opacity},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"eps", t.adam.eps},
        {"lambda_tv", t.lambda_tv},
        {"tv_normalization", "mean"},
        {"schedule", "constant"},
        {"seed", t.seed},
        {"max_sh_degree", t.max_sh_degree},
        {"checkpoint_every", 0}}},
      {"ablation", {{"no_prune", false}, {"no_add", false}, {"freeze_geometry", false}, {"no_dropout", false}}},
  };
}

PipelineConfig config_from_json(const json& input, const fs::path& base_dir) {
  json j = default_config_json();
  merge_checked(j, input, "");
  PipelineConfig c;

  auto path = [&](const char* key) { return resolve(get<std::string>(j, "paths", key), base_dir); };
  c.paths.cameras = path("cameras");
  c.paths.depth_dir = path("depth_dir");
  c.paths.images_dir = path("images_dir");
  c.paths.heldout_cameras = path("heldout_cameras");
  c.paths.heldout_images_dir = path("heldout_images_dir");
  c.paths.render_cameras = path("render_cameras");
  c.paths.input = path("input");
  c.paths.output = path("output");
  c.paths.script = path("script");
  for (const auto& [key, p] : {std::pair{"cameras", c.paths.cameras}, {"depth_dir", c.paths.depth_dir},
                               {"images_dir", c.paths.images_dir}, {"heldout_cameras", c.paths.heldout_cameras},
                               {"heldout_images_dir", c.paths.heldout_images_dir},
                               {"render_cameras", c.paths.render_cameras}, {"input", c.paths.input},
                               {"script", c.paths.script}})
    if (!p.empty()) require_path(p, key);

  c.feature_dim = get<int>(j, "model", "feature_dim");
  c.point_radius = get<double>(j, "model", "point_radius");
  SNP_CHECK(c.feature_dim > 0 && c.feature_dim % 9 == 0, ErrorCode::InvalidArgument,
            "model.feature_dim must be a positive multiple of 9");
  SNP_CHECK(c.point_radius > 0, ErrorCode::InvalidArgument, "model.point_radius must be > 0");

  c.render.gamma = get<double>(j, "render", "gamma");
  if (!j["render"]["radius"].is_null()) c.render.radius = get<double>(j, "render", "radius");
  c.render.dropout_rate = get<double>(j, "render", "dropout_rate");
  c.render.subsets = get<int>(j, "render", "subsets");
  c.render.background = get<std::vector<double>>(j, "render", "background");
  c.render.z_near = get<double>(j, "render", "z_near");
  c.render.z_far = get<double>(j, "render", "z_far");
  c.render.seed = get<std::uint64_t>(j, "render", "seed");
  const auto vd = get<std::string>(j, "render", "view_directions");
  SNP_CHECK(vd == "per-point" || vd == "per-view", ErrorCode::InvalidArgument,
            "render.view_directions must be per-point or per-view");
  c.render.view_directions = vd == "per-point" ? ViewDirectionMode::PerPoint : ViewDirectionMode::PerView;
  c.render.max_contributors = get<int>(j, "render", "max_contributors");
  c.render.tile_size = get<int>(j, "render", "tile_size");
  c.render.validate();

  c.train.steps = get<int>(j, "optimizer", "steps");
  c.train.lr = {get<double>(j, "optimizer", "lr_features"), get<double>(j, "optimizer", "lr_positions"),
                get<double>(j, "optimizer", "lr_opacity")};
  c.train.adam = {get<double>(j, "optimizer", "beta1"), get<double>(j, "optimizer", "beta2"),
                  get<double>(j, "optimizer", "eps")};
  c.train.lambda_tv = get<double>(j, "optimizer", "lambda_tv");
  const auto tvn = get<std::string>(j, "optimizer", "tv_normalization");
  SNP_CHECK(tvn == "mean" || tvn == "sum", ErrorCode::InvalidArgument, "optimizer.tv_normalization: mean | sum");
  c.train.tv_normalization = tvn == "mean" ? TvNormalization::Mean : TvNormalization::Sum;
  const auto sched = get<std::string>(j, "optimizer", "schedule");
  SNP_CHECK(sched == "constant" || sched == "one-cycle", ErrorCode::InvalidArgument,
            "optimizer.schedule: constant | one-cycle");
  c.train.schedule = sched == "constant" ? LrSchedule::Constant : LrSchedule::OneCycle;
  c.train.seed = get<std::uint64_t>(j, "optimizer", "seed");
  c.train.max_sh_degree = get<int>(j, "optimizer", "max_sh_degree");
  c.train.checkpoint_every = get<int>(j, "optimizer", "checkpoint_every");
  SNP_CHECK(c.train.steps >= 0, ErrorCode::InvalidArgument, "optimizer.steps must be >= 0");
  SNP_CHECK(c.train.max_sh_degree >= 0 && c.train.max_sh_degree <= 2, ErrorCode::InvalidArgument,
            "optimizer.max_sh_degree must be 0, 1 or 2");
  SNP_CHECK(c.train.lr.features >= 0 && c.train.lr.positions >= 0 && c.train.lr.opacity >= 0,
            ErrorCode::InvalidArgument, "learning rates must be >= 0");

  c.sculpt.delta_d = get<double>(j, "sculpt", "delta_d");
  c.sculpt.add.delta_e_factor = get<double>(j, "sculpt", "delta_e_factor");
  c.sculpt.add.max_per_pixel = get<int>(j, "sculpt", "max_per_pixel");
  c.sculpt.add.eps_occ = get<double>(j, "sculpt", "eps_occ");
  c.sculpt.add.bounds.n_bins = get<int>(j, "sculpt", "n_bins");
  const auto sampling = get<std::string>(j, "sculpt", "sampling");
  SNP_CHECK(sampling == "linear" || sampling == "inverse-depth", ErrorCode::InvalidArgument,
            "sculpt.sampling: linear | inverse-depth");
  c.sculpt.add.bounds.mode = sampling == "linear" ? DepthSampling::Linear : DepthSampling::InverseDepth;
  c.sculpt.add.bounds.z_near = get<double>(j, "sculpt", "z_near");
  c.sculpt.add.bounds.z_far = get_depth(j, "sculpt", "z_far");
  c.sculpt.add.bounds.validate();
  c.sculpt.rounds = get<int>(j, "sculpt", "rounds");
  SNP_CHECK(c.sculpt.delta_d > 0, ErrorCode::InvalidArgument, "sculpt.delta_d must be > 0");
  SNP_CHECK(c.sculpt.add.max_per_pixel >= 1, ErrorCode::InvalidArgument, "sculpt.max_per_pixel must be >= 1");
  SNP_CHECK(c.sculpt.rounds >= 1, ErrorCode::InvalidArgument, "sculpt.rounds must be >= 1");
  c.sculpt.optimize = c.train;
  c.sculpt.optimize.steps = get<int>(j, "sculpt", "fit_steps");
  c.sculpt.optimize.seed = get<std::uint64_t>(j, "sculpt", "fit_seed");
  c.sculpt.optimize.checkpoint_every = 0;
  SNP_CHECK(c.sculpt.optimize.steps >= 0, ErrorCode::InvalidArgument, "sculpt.fit_steps must be >= 0");

  c.ablation.no_prune = get<bool>(j, "ablation", "no_prune");
  c.ablation.no_add = get<bool>(j, "ablation", "no_add");
  c.ablation.freeze_geometry = get<bool>(j, "ablation", "freeze_geometry");
  c.ablation.no_dropout = get<bool>(j, "ablation", "no_dropout");
  return c;
}

json config_to_json(const PipelineConfig& c) {
  json j = default_config_json();
  auto& p = j["paths"];
  p["cameras"] = c.paths.cameras.string();
  p["depth_dir"] = c.paths.depth_dir.string();
  p["images_dir"] = c.paths.images_dir.string();
  p["heldout_cameras"] = c.paths.heldout_cameras.string();
  p["heldout_images_dir"] = c.paths.heldout_images_dir.string();
  p["render_cameras"] = c.paths.render_cameras.string();
  p["input"] = c.paths.input.string();
  p["output"] = c.paths.output.string();
  p["script"] = c.paths.script.string();
  j["model"] = {{"feature_dim", c.feature_dim}, {"point_radius", c.point_radius}};
  auto& r = j["render"];
  r["gamma"] = c.render.gamma;
  r["radius"] = c.render.radius ? json(*c.render.radius) : json(nullptr);
  r["dropout_rate"] = c.render.dropout_rate;
  r["subsets"] = c.render.subsets;
  r["background"] = c.render.background;
  r["z_near"] = c.render.z_near;
  r["z_far"] = c.render.z_far;
  r["seed"] = c.render.seed;
  r["view_directions"] = c.render.view_directions == ViewDirectionMode::PerPoint ? "per-point" : "per-view";
  r["max_contributors"] = c.render.max_contributors;
  r["tile_size"] = c.render.tile_size;
  auto& s = j["sculpt"];
  s["delta_d"] = c.sculpt.delta_d;
  s["delta_e_factor"] = c.sculpt.add.delta_e_factor;
  s["max_per_pixel"] = c.sculpt.add.max_per_pixel;
  s["n_bins"] = c.sculpt.add.bounds.n_bins;
  s["sampling"] = c.sculpt.add.bounds.mode == DepthSampling::Linear ? "linear" : "inverse-depth";
  s["z_near"] = c.sculpt.add.bounds.z_near;
  s["z_far"] = depth_to_json(c.sculpt.add.bounds.z_far);
  s["eps_occ"] = c.sculpt.add.eps_occ;
  s["rounds"] = c.sculpt.rounds;
  s["fit_steps"] = c.sculpt.optimize.steps;
  s["fit_seed"] = c.sculpt.optimize.seed;
  auto& o = j["optimizer"];
  o["steps"] = c.train.steps;
  o["lr_features"] = c.train.lr.features;
  o["lr_positions"] = c.train.lr.positions;
  o["lr_opacity"] = c.train.lr.opacity;
  o["beta1"] = c.train.adam.beta1;
  o["beta2"] = c.train.adam.beta2;
  o["eps"] = c.train.adam.eps;
  o["lambda_tv"] = c.train.lambda_tv;
  o["tv_normalization"] = c.train.tv_normalization == TvNormalization::Mean ? "mean" : "sum";
  o["schedule"] = c.train.schedule == LrSchedule::Constant ? "constant" : "one-cycle";
  o["seed"] = c.train.seed;
  o["max_sh_degree"] = c.train.max_sh_degree;
  o["checkpoint_every"] = c.train.checkpoint_every;
  j["ablation"] = {{"no_prune", c.ablation.no_prune},
                   {"no_add", c.ablation.no_add},
                   {"freeze_geometry", c.ablation.freeze_geometry},
                   {"no_dropout", c.ablation.no_dropout}};
  return j;
}

void apply_override(json& j, const std::string& dotted_key, const std::string& value) {
  const auto defaults = default_config_json();
  const auto dot = dotted_key.find('.');
  SNP_CHECK(dot != std::string::npos, ErrorCode::InvalidArgument, "override key must be section.key: " + dotted_key);
  const std::string section = dotted_key.substr(0, dot), key = dotted_key.substr(dot + 1);
  SNP_CHECK(defaults.contains(section) && defaults[section].contains(key), ErrorCode::InvalidArgument,
            "unknown config key '" + dotted_key + "'");
  json v;
  if (section == "paths") {
    v = value;
  } else {
    v = json::parse(value, nullptr, false);
    if (v.is_discarded()) v = value;
  }
  j[section][key] = v;
}

PipelineConfig load_config(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
  json j = json::object();
  fs::path base;
  if (!path.empty()) {
    std::ifstream in(path);
    SNP_CHECK(in.good(), ErrorCode::Io, "cannot open config file " + path.string());
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    base = path.parent_path();
  }
  for (const auto& [k, v] : overrides) apply_override(j, k, v);
  return config_from_json(j, base);
}

// ---- plumbing -------------------------------------------------------------

OutputLock::OutputLock(const fs::path& path) : lock_(path.string() + ".lock") {
  ensure_parent(lock_);
  const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  SNP_CHECK(fd >= 0, ErrorCode::Io, "output is locked by another run (remove " + lock_.string() + " if stale)");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(lock_, ec);
}

void set_stage_logger(StageLogger l) { logger() = std::move(l); }

void log_stage(const std::string& stage, const std::vector<std::pair<std::string, std::string>>& fields) {
  std::string line = "stage=" + stage;
  for (const auto& [k, v] : fields) line += " " + k + "=" + v;
  static std::mutex m;
  std::lock_guard lock(m);
  if (logger()) logger()(line);
}

std::vector<Image> read_image_dir(const fs::path& dir) {
  SNP_CHECK(fs::is_directory(dir), ErrorCode::Io, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".pfm" || ext == ".png")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> images;
  for (const auto& f : files) images.push_back(read_image(f));
  return images;
}

std::vector<TrainView> load_views(const fs::path& cameras, const fs::path& images_dir) {
  const auto cams = load_cameras(cameras, "cameras");
  require_path(images_dir, "images_dir");
  const auto images = read_image_dir(images_dir);
  SNP_CHECK(images.size() == cams.size(), ErrorCode::DimMismatch,
            images_dir.string() + ": " + std::to_string(images.size()) + " images for " +
                std::to_string(cams.size()) + " cameras");
  std::vector<TrainView> views;
  for (std::size_t i = 0; i < cams.size(); ++i) views.push_back({cams[i], images[i]});
  return views;
}

fs::path sibling(const fs::path& ply, const std::string& suffix) {
  return ply.parent_path() / (ply.stem().string() + suffix);
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e))
    return err->code() == ErrorCode::Io || err->code() == ErrorCode::ParseError ? 2 : 1;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return 2;
  return 1;
}

// ---- stages ---------------------------------------------------------------

FuseResult run_fuse(const PipelineConfig& c) {
  require_output(c.paths.output);
  const auto t0 = std::chrono::steady_clock::now();
  const auto maps = load_maps(c);
  OutputLock lock(c.paths.output);
  FuseResult r{fuse_depth_maps(maps, c.feature_dim, c.point_radius)};
  write_cloud(c.paths.output, r.cloud);
  log_stage("fuse", {{"maps", std::to_string(maps.size())},
                     {"n", std::to_string(r.cloud.size())},
                     {"seconds", secs(seconds_since(t0))}});
  return r;
}

PruneResult run_prune(const PipelineConfig& c) {
  require_output(c.paths.output);
  const auto t0 = std::chrono::steady_clock::now();
  const auto cloud = load_input(c);
  const auto maps = load_maps(c);
  OutputLock lock(c.paths.output);
  std::vector<std::uint8_t> keep(cloud.size(), 1);
  if (!c.ablation.no_prune) keep = consistency_keep_mask(cloud.positions, maps, c.sculpt.delta_d);
  PruneResult r;
  r.cloud = select(cloud, keep);
  r.n_input = cloud.size();
  r.pruned = cloud.size() - r.cloud.size();
  write_cloud(c.paths.output, r.cloud);
  log_stage("prune", {{"n_input", std::to_string(r.n_input)},
                      {"pruned", std::to_string(r.pruned)},
                      {"n_output", std::to_string(r.cloud.size())},
                      {"seconds", secs(seconds_since(t0))}});
  return r;
}

SculptResult run_add(const PipelineConfig& c) {
  SculptConfig sc = c.effective_sculpt();
  sc.prune = false;
  return sculpt_stage(c, sc, "add");
}

std::string format_sculpt_report(const SculptReport& r) {
  const std::vector<std::pair<std::string, std::string>> rows{
      {"input points", std::to_string(r.n_input)},
      {"pruned", std::to_string(r.pruned)},
      {"after pruning", std::to_string(r.n_after_prune)},
      {"triggering pixels", std::to_string(r.triggering_pixels)},
      {"added", std::to_string(r.added)},
      {"output points", std::to_string(r.n_output)},
      {"delta_e", num(r.delta_e)},
  };
  std::size_t w = 0, wv = 0;
  for (const auto& [k, v] : rows) {
    w = std::max(w, k.size());
    wv = std::max(wv, v.size());
  }
  std::string out;
  for (const auto& [k, v] : rows) out += k + std::string(w - k.size() + 2, ' ') + std::string(wv - v.size(), ' ') + v + "\n";
  return out;
}

SculptResult run_sculpt(const PipelineConfig& c) { return sculpt_stage(c, c.effective_sculpt(), "sculpt"); }

TrainResult run_train(const PipelineConfig& c) {
  require_output(c.paths.output);
  const auto t0 = std::chrono::steady_clock::now();
  const auto cloud = load_input(c);
  const auto views = load_views(c.paths.cameras, c.paths.images_dir);
  OutputLock lock(c.paths.output);
  TrainConfig tc = c.effective_train();
  const fs::path out = c.paths.output;
  tc.on_checkpoint = [out](int step, const FeaturizedPointCloud& snapshot) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_ckpt_%06d.ply", step);
    write_cloud(sibling(out, buf), snapshot);
  };
  auto result = train(cloud, views, c.train_render(), tc);
  write_cloud(out, result.cloud);
  std::string csv = "step,l1,tv,total\n";
  for (const auto& r : result.history)
    csv += std::to_string(r.step) + "," + num(r.l1) + "," + num(r.tv) + "," + num(r.total) + "\n";
  write_text(sibling(out, "_loss.csv"), csv);
  const double last = result.history.empty() ? 0.0 : result.history.back().l1;
  log_stage("train", {{"n", std::to_string(result.cloud.size())},
                      {"steps", std::to_string(tc.steps)},
                      {"final_l1", num(last)},
                      {"seconds", secs(seconds_since(t0))}});
  return result;
}

RenderResult run_render(const PipelineConfig& c) {
  require_output(c.paths.output);
  const auto t0 = std::chrono::steady_clock::now();
  const auto cloud = load_input(c);
  const bool path_given = !c.paths.render_cameras.empty();
  const auto cameras = path_given ? load_cameras(c.paths.render_cameras, "render_cameras")
                                  : load_cameras(c.paths.heldout_cameras, "heldout_cameras");
  std::vector<Image> refs;
  if (!c.paths.heldout_images_dir.empty()) {
    refs = read_image_dir(c.paths.heldout_images_dir);
    if (refs.size() != cameras.size()) refs.clear();
  }
  OutputLock lock(c.paths.output);
  fs::create_directories(c.paths.output);
  const RenderConfig rc = c.inference_render();
  RenderResult result;
  // One subset draw shared by every frame.
  const auto masks = sample_subsets(cloud.size(), rc.dropout_rate, rc.subsets, rc.seed);
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    Image img = rasterize(cloud, cameras[i], rc, masks[0]).image;
    for (std::size_t l = 1; l < masks.size(); ++l) {
      const Image next = rasterize(cloud, cameras[i], rc, masks[l]).image;
      const double inv = 1.0 / static_cast<double>(l + 1);
      for (std::size_t k = 0; k < img.data.size(); ++k) img.data[k] += (next.data[k] - img.data[k]) * inv;
    }
    write_png(c.paths.output / frame_name(static_cast<int>(i), "png"), img);
    write_pfm(c.paths.output / frame_name(static_cast<int>(i), "pfm"), img);
    if (!refs.empty()) {
      FrameMetrics m{static_cast<int>(i), psnr(img, refs[i]),
                     img.width >= 11 && img.height >= 11 ? ssim(img, refs[i]) : 0.0};
      result.metrics.push_back(m);
    }
    result.frames.push_back(std::move(img));
  }
  if (!result.metrics.empty()) {
    std::string csv = "frame,psnr,ssim\n";
    double ps = 0, ss = 0;
    for (const auto& m : result.metrics) {
      csv += std::to_string(m.frame) + "," + num(m.psnr) + "," + num(m.ssim) + "\n";
      ps += m.psnr;
      ss += m.ssim;
    }
    csv += "mean," + num(ps / result.metrics.size()) + "," + num(ss / result.metrics.size()) + "\n";
    write_text(c.paths.output / "metrics.csv", csv);
  }
  log_stage("render", {{"frames", std::to_string(cameras.size())},
                       {"n", std::to_string(cloud.size())},
                       {"subsets", std::to_string(masks.size())},
                       {"seconds", secs(seconds_since(t0))}});
  return result;
}

FeaturizedPointCloud apply_edit_script(const FeaturizedPointCloud& cloud, const json& script,
                                       const fs::path& base_dir) {
  SNP_CHECK(script.is_object() && (script.empty() || script.contains("steps")), ErrorCode::InvalidArgument,
            "edit script must be an object with a 'steps' array");
  FeaturizedPointCloud out = cloud;
  if (script.empty()) return out;
  const auto& steps = script.at("steps");
  SNP_CHECK(steps.is_array(), ErrorCode::InvalidArgument, "'steps' must be an array");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& step = steps[i];
    const std::string op = step.value("op", "");
    try {
      if (op == "merge") {
        const fs::path p = resolve(step.at("path").get<std::string>(), base_dir);
        SNP_CHECK(fs::exists(p), ErrorCode::Io, "merge input does not exist: " + p.string());
        out = merge(out, read_ply(p));
      } else if (op == "transform") {
        RigidTransform rigid;
        rigid.rotation = rotation_from(step);
        if (step.contains("translation")) rigid.translation = vec3_from(step.at("translation"), "translation");
        if (step.contains("pivot")) {
          const Vec3 c = vec3_from(step.at("pivot"), "pivot");
          rigid.translation += c - rigid.rotation * c;
        }
        const auto sel = step.contains("where") ? selector_from(step.at("where"))
                                                : PointSelector([](std::size_t, const Vec3&) { return true; });
        out = transform_subset(out, sel, rigid);
      } else if (op == "erase") {
        const auto sel = selector_from(step.at("where"));
        out = erase(out, [&sel](std::size_t k, const Vec3& p) { return !sel(k, p); });
      } else {
        throw Error(ErrorCode::InvalidArgument, "unknown op '" + op + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, "edit step " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

FeaturizedPointCloud run_edit(const PipelineConfig& c) {
  require_output(c.paths.output);
  const auto t0 = std::chrono::steady_clock::now();
  const auto cloud = load_input(c);
  json script = json::object();
  if (!c.paths.script.empty()) {
    std::ifstream in(c.paths.script);
    SNP_CHECK(in.good(), ErrorCode::Io, "cannot open edit script " + c.paths.script.string());
    try {
      in >> script;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, c.paths.script.string() + ": " + e.what());
    }
  }
  OutputLock lock(c.paths.output);
  auto out = apply_edit_script(cloud, script, c.paths.script.parent_path());
  write_cloud(c.paths.output, out);
  log_stage("edit", {{"n_input", std::to_string(cloud.size())},
                     {"steps", std::to_string(script.contains("steps") ? script["steps"].size() : 0)},
                     {"n_output", std::to_string(out.size())},
                     {"seconds", secs(seconds_since(t0))}});
  return out;
}

// ---- synthetic scenes and bench -------------------------------------------

Vec3 default_hole_center() {
  const double e = 25.0 * M_PI / 180.0, a = 0.3;
  return {std::sin(a) * std::cos(e), std::sin(e), -std::cos(a) * std::cos(e)};
}

void run_synth(const SynthOptions& o, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  SceneSpec spec = SceneSpec::preset(o.kind);
  if (o.width > 0) spec.width = o.width;
  if (o.height > 0) spec.height = o.height;
  const auto scene = generate(spec, o.seed);
  const auto& gt = scene.truth;

  std::vector<DepthMap> maps = gt.depth_maps;
  std::vector<MapPixel> floaters;
  std::size_t carved = 0;
  if (o.floaters > 0) {
    auto fl = inject_floaters(maps, o.floaters, o.floater_factor, o.seed + 1);
    maps = std::move(fl.maps);
    floaters = std::move(fl.changed);
  }
  if (o.hole) {
    auto h = carve_hole(maps, o.hole_center, o.hole_radius);
    maps = std::move(h.maps);
    carved = h.changed.size();
  }
  const auto labels = fused_labels(maps, floaters);

  OutputLock lock(dir / "scene");
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "heldout_images");
  fs::create_directories(dir / "depth");
  write_cameras(dir / "cameras.json", gt.train_cameras);
  write_cameras(dir / "heldout_cameras.json", gt.heldout_cameras);
  char buf[64];
  for (std::size_t i = 0; i < gt.train_images.size(); ++i) {
    std::snprintf(buf, sizeof buf, "view_%03zu.pfm", i);
    write_pfm(dir / "images" / buf, gt.train_images[i]);
  }
  for (std::size_t i = 0; i < gt.heldout_images.size(); ++i) {
    std::snprintf(buf, sizeof buf, "view_%03zu.pfm", i);
    write_pfm(dir / "heldout_images" / buf, gt.heldout_images[i]);
  }
  for (std::size_t i = 0; i < maps.size(); ++i) {
    std::snprintf(buf, sizeof buf, "depth_%03zu.pfm", i);
    write_depth_map(dir / "depth" / buf, maps[i]);
  }
  // Fuse what was stored (float32 depths) so `fuse` on this directory
  // reproduces the file exactly.
  const auto fused = fuse_depth_maps(read_depth_dir(dir / "depth", gt.train_cameras), 27, spec.point_radius);
  write_ply(dir / "fused.ply", fused);

  json lab;
  lab["kind"] = to_string(o.kind);
  lab["seed"] = o.seed;
  lab["n_fused"] = fused.size();
  std::vector<std::size_t> injected;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) injected.push_back(i);
  lab["floaters"] = {{"requested", o.floaters}, {"depth_factor", o.floater_factor}, {"fused_indices", injected}};
  lab["hole"] = {{"enabled", o.hole},
                 {"center", {o.hole_center.x(), o.hole_center.y(), o.hole_center.z()}},
                 {"radius", o.hole_radius},
                 {"carved_pixels", carved}};
  write_text(dir / "labels.json", lab.dump(2) + "\n");

  PipelineConfig c = config_from_json(default_config_json());
  c.paths.cameras = "cameras.json";
  c.paths.depth_dir = "depth";
  c.paths.images_dir = "images";
  c.paths.heldout_cameras = "heldout_cameras.json";
  c.paths.heldout_images_dir = "heldout_images";
  c.paths.input = "fused.ply";
  c.point_radius = spec.point_radius;
  c.render.z_near = spec.bounds.z_near;
  c.render.z_far = spec.bounds.z_far;
  c.sculpt.add.bounds = spec.bounds;
  write_text(dir / "config.json", config_to_json(c).dump(2) + "\n");

  log_stage("synth", {{"kind", to_string(o.kind)},
                      {"views", std::to_string(gt.train_cameras.size())},
                      {"heldout", std::to_string(gt.heldout_cameras.size())},
                      {"n_fused", std::to_string(fused.size())},
                      {"floaters", std::to_string(injected.size())},
                      {"carved_pixels", std::to_string(carved)},
                      {"seconds", secs(seconds_since(t0))}});
}

AblationFlags variant_flags(const std::string& v) {
  if (v == "full") return {};
  if (v == "baseline") return {true, true, true, false};
  if (v == "no_prune_no_add") return {true, true, false, false};
  if (v == "no_add") return {false, true, false, false};
  if (v == "no_prune") return {true, false, false, false};
  if (v == "no_refine") return {false, false, true, false};
  if (v == "no_dropout") return {false, false, false, true};
  throw Error(ErrorCode::InvalidArgument, "unknown bench variant '" + v + "'");
}

std::vector<BenchRecord> run_bench(const PipelineConfig& base, const BenchOptions& o, const fs::path& work_dir) {
  for (const auto& v : o.variants) variant_flags(v);
  std::vector<BenchRecord> records;
  for (const auto kind : o.scenes)
    for (const auto seed : o.seeds) {
      const fs::path scene_dir = work_dir / (to_string(kind) + "_s" + std::to_string(seed));
      SynthOptions so;
      so.kind = kind;
      so.seed = seed;
      so.floaters = o.floaters;
      so.hole = o.hole;
      so.hole_center = default_hole_center();
      so.hole_radius = 0.4;
      run_synth(so, scene_dir);
      const auto scene_cfg = load_config(scene_dir / "config.json");
      const auto train_cams = read_cameras(scene_cfg.paths.cameras);
      const auto train_imgs = read_image_dir(scene_cfg.paths.images_dir);
      const auto held_cams = read_cameras(scene_cfg.paths.heldout_cameras);
      const auto held_imgs = read_image_dir(scene_cfg.paths.heldout_images_dir);

      for (const auto& variant : o.variants) {
        const auto t0 = std::chrono::steady_clock::now();
        PipelineConfig c = base;
        c.paths = scene_cfg.paths;
        c.point_radius = scene_cfg.point_radius;
        c.render.z_near = scene_cfg.render.z_near;
        c.render.z_far = scene_cfg.render.z_far;
        c.sculpt.add.bounds = scene_cfg.sculpt.add.bounds;
        c.ablation = variant_flags(variant);
        const fs::path vdir = scene_dir / variant;
        c.paths.output = vdir / "sculpted.ply";
        const auto sculpted = run_sculpt(c);
        c.paths.input = c.paths.output;
        c.paths.output = vdir / "trained.ply";
        const auto trained = run_train(c);

        BenchRecord r;
        r.scene = to_string(kind);
        r.variant = variant;
        r.seed = seed;
        r.n_points = trained.cloud.size();
        r.pruned = sculpted.report.pruned;
        r.added = sculpted.report.added;
        const RenderConfig rc = c.inference_render();
        std::tie(r.train_psnr, r.train_ssim) = evaluate(trained.cloud, train_cams, train_imgs, rc);
        std::tie(r.heldout_psnr, r.heldout_ssim) = evaluate(trained.cloud, held_cams, held_imgs, rc);
        r.seconds = seconds_since(t0);
        log_stage("bench", {{"scene", r.scene},
                            {"variant", variant},
                            {"seed", std::to_string(seed)},
                            {"heldout_psnr", num(r.heldout_psnr)},
                            {"seconds", secs(r.seconds)}});
        records.push_back(r);
      }
    }
  return records;
}

}  // namespace snp
