#pragma once

#include "snp/optimizer.hpp"
#include "snp/pointcloud.hpp"
#include "snp/rasterizer.hpp"
#include "snp/report.hpp"
#include "snp/sculpting.hpp"
#include "snp/synth.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace snp {

struct PipelinePaths {
  std::filesystem::path cameras;           // training cameras JSON
  std::filesystem::path depth_dir;         // *.pfm depth maps + sidecars
  std::filesystem::path images_dir;        // training images (*.pfm or *.png, sorted)
  std::filesystem::path heldout_cameras;   // optional
  std::filesystem::path heldout_images_dir;
  std::filesystem::path render_cameras;    // camera path for `render`
  std::filesystem::path input;             // input PLY
  std::filesystem::path output;            // output PLY (or directory for render/synth/bench)
  std::filesystem::path script;            // edit script JSON
};

struct AblationFlags {
  bool no_prune = false;
  bool no_add = false;
  bool freeze_geometry = false;  // point positions are not optimized
  bool no_dropout = false;       // no dropout in training, full cloud at render
};

struct PipelineConfig {
  PipelinePaths paths;
  RenderConfig render;
  SculptConfig sculpt;  // sculpt.optimize holds the pre-adding fit
  TrainConfig train;
  AblationFlags ablation;
  int feature_dim = 27;
  double point_radius = 0.045;

  // Render settings used while training (dropout off under no_dropout).
  RenderConfig train_render() const;
  // Render settings used for inference.
  RenderConfig inference_render() const;
  TrainConfig effective_train() const;
  SculptConfig effective_sculpt() const;
};

// Defaults for every key, as a JSON document with the same layout `load`
// accepts.
nlohmann::json default_config_json();

// Parses a config document; unknown keys are rejected (InvalidArgument).
// Relative paths resolve against `base_dir`.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const PipelineConfig& config);

// Sets a dotted key ("optimizer.steps") to a value parsed as JSON, falling
// back to a plain string. Throws InvalidArgument for an unknown key.
void apply_override(nlohmann::json& j, const std::string& dotted_key, const std::string& value);

// Loads a config file (or defaults when `path` is empty) and applies the
// overrides in order.
PipelineConfig load_config(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Holds `<path>.lock` for its lifetime; throws Io if another holder exists.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& path);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path lock_;
};

// Destination of the per-stage structured log lines (stderr by default).
using StageLogger = std::function<void(const std::string&)>;
void set_stage_logger(StageLogger logger);
void log_stage(const std::string& stage, const std::vector<std::pair<std::string, std::string>>& fields);

// Images of a directory, sorted by file name.
std::vector<Image> read_image_dir(const std::filesystem::path& dir);
std::vector<TrainView> load_views(const std::filesystem::path& cameras, const std::filesystem::path& images_dir);

// Sidecar path next to a PLY: "out.ply" + "_report.csv" -> "out_report.csv".
std::filesystem::path sibling(const std::filesystem::path& ply, const std::string& suffix);

struct FuseResult {
  FeaturizedPointCloud cloud;
};
FuseResult run_fuse(const PipelineConfig& config);

struct PruneResult {
  FeaturizedPointCloud cloud;
  std::size_t n_input = 0;
  std::size_t pruned = 0;
};
PruneResult run_prune(const PipelineConfig& config);

// Fit + add only (no pruning); features are reset like run_sculpt.
SculptResult run_add(const PipelineConfig& config);

std::string format_sculpt_report(const SculptReport& report);
SculptResult run_sculpt(const PipelineConfig& config);

TrainResult run_train(const PipelineConfig& config);

struct FrameMetrics {
  int frame = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};
struct RenderResult {
  std::vector<Image> frames;
  std::vector<FrameMetrics> metrics;  // filled when reference images exist
};
// Renders every camera of paths.render_cameras (or the held-out cameras) into
// paths.output as frame_0000.png / .pfm; all frames share one subset draw.
RenderResult run_render(const PipelineConfig& config);

// Edit script: {"steps": [ {"op": "merge", "path": ...},
//   {"op": "transform", "where": W, "rotation": [9] | "axis_angle": [4], "translation": [3]},
//   {"op": "erase", "where": W} ]}
// W selects points: {"all": true} | {"axis": "x|y|z", "less": v} | {"axis": .., "greater": v}
//   | {"ball": {"center": [3], "radius": r}} | {"box": {"min": [3], "max": [3]}}.
// "erase" removes the selected points.
FeaturizedPointCloud apply_edit_script(const FeaturizedPointCloud& cloud, const nlohmann::json& script,
                                       const std::filesystem::path& base_dir = {});
FeaturizedPointCloud run_edit(const PipelineConfig& config);

// Synthetic scene directory: cameras.json, heldout_cameras.json, images/,
// heldout_images/, depth/, fused.ply, labels.json, config.json.
struct SynthOptions {
  SceneKind kind = SceneKind::LambertianSphere;
  std::uint64_t seed = 0;
  int floaters = 0;
  double floater_factor = 0.5;
  bool hole = false;
  Vec3 hole_center = Vec3::Zero();
  double hole_radius = 0.0;
  int width = 0;   // 0 keeps the preset
  int height = 0;
};
// Fixed hole position on the upper front of the sphere.
Vec3 default_hole_center();
void run_synth(const SynthOptions& options, const std::filesystem::path& out_dir);

// Variants: "full", "no_prune_no_add", "no_add", "no_prune", "no_refine",
// "no_dropout". Scenes are written below `work_dir`.
struct BenchOptions {
  std::vector<SceneKind> scenes{SceneKind::LambertianSphere};
  std::vector<std::string> variants{"full", "no_prune_no_add"};
  std::vector<std::uint64_t> seeds{0};
  int floaters = 100;
  bool hole = true;
};
std::vector<BenchRecord> run_bench(const PipelineConfig& config, const BenchOptions& options,
                                   const std::filesystem::path& work_dir);
AblationFlags variant_flags(const std::string& variant);

// Maps an exception to the process exit code: 2 for I/O and parse failures,
// 1 for everything else.
int exit_code_for(const std::exception& e);

}  // namespace snp
