#include "snp/error.hpp"
#include "snp/geometry.hpp"
#include "snp/io.hpp"
#include "snp/pipeline.hpp"
#include "snp/report.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace snp;

namespace {

// Flag -> config key. Every flag overrides the matching JSON key.
struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
  bool is_bool = false;
  bool is_path = false;
};

const std::vector<FlagSpec>& flag_table() {
  static const std::vector<FlagSpec> t{
      {"--input", "paths.input", "input PLY", false, true},
      {"--output", "paths.output", "output PLY or directory", false, true},
      {"--cameras", "paths.cameras", "training cameras JSON", false, true},
      {"--depth-dir", "paths.depth_dir", "directory of depth-map PFMs", false, true},
      {"--images-dir", "paths.images_dir", "training images directory", false, true},
      {"--heldout-cameras", "paths.heldout_cameras", "held-out cameras JSON", false, true},
      {"--heldout-images-dir", "paths.heldout_images_dir", "held-out images directory", false, true},
      {"--camera-path", "paths.render_cameras", "cameras JSON to render", false, true},
      {"--script", "paths.script", "edit script JSON", false, true},
      {"--feature-dim", "model.feature_dim", "feature dimension K"},
      {"--point-radius", "model.point_radius", "radius of fused points (NDC)"},
      {"--gamma", "render.gamma", "blend softness"},
      {"--radius", "render.radius", "render radius override (NDC)"},
      {"--dropout-rate", "render.dropout_rate", "point dropout probability"},
      {"--subsets", "render.subsets", "ensemble size L"},
      {"--z-near", "render.z_near", "near depth"},
      {"--z-far", "render.z_far", "far depth"},
      {"--render-seed", "render.seed", "seed of the inference subsets"},
      {"--delta-d", "sculpt.delta_d", "pruning threshold"},
      {"--delta-e-factor", "sculpt.delta_e_factor", "adding threshold factor"},
      {"--max-per-pixel", "sculpt.max_per_pixel", "points added per pixel (M)"},
      {"--bins", "sculpt.n_bins", "candidate depth bins"},
      {"--sampling", "sculpt.sampling", "linear | inverse-depth"},
      {"--bounds-near", "sculpt.z_near", "candidate near bound"},
      {"--bounds-far", "sculpt.z_far", "candidate far bound (or inf)"},
      {"--fit-steps", "sculpt.fit_steps", "fit steps before adding"},
      {"--steps", "optimizer.steps", "training steps"},
      {"--seed", "optimizer.seed", "training seed"},
      {"--lr-features", "optimizer.lr_features", "feature learning rate"},
      {"--lr-positions", "optimizer.lr_positions", "position learning rate"},
      {"--lr-opacity", "optimizer.lr_opacity", "opacity learning rate"},
      {"--lambda-tv", "optimizer.lambda_tv", "TV weight"},
      {"--schedule", "optimizer.schedule", "constant | one-cycle"},
      {"--max-sh-degree", "optimizer.max_sh_degree", "0, 1 or 2"},
      {"--checkpoint-every", "optimizer.checkpoint_every", "checkpoint period in steps"},
      {"--no-prune", "ablation.no_prune", "skip pruning", true},
      {"--no-add", "ablation.no_add", "skip adding", true},
      {"--freeze-geometry", "ablation.freeze_geometry", "do not optimize positions", true},
      {"--no-dropout", "ablation.no_dropout", "no point dropout", true},
  };
  return t;
}

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", a.sets, "override: section.key=value (repeatable)");
  for (const auto& f : flag_table()) {
    if (f.is_bool)
      cmd->add_flag(f.flag, a.flags[f.key], f.help);
    else
      cmd->add_option(f.flag, a.values[f.key], f.help);
  }
}

PipelineConfig build_config(CLI::App* cmd, const CommonArgs& a) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    SNP_CHECK(eq != std::string::npos, ErrorCode::InvalidArgument, "--set expects section.key=value: " + s);
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& f : flag_table()) {
    if (cmd->count(f.flag) == 0) continue;
    if (f.is_bool) {
      overrides.emplace_back(f.key, a.flags.at(f.key) ? "true" : "false");
    } else {
      std::string v = a.values.at(f.key);
      // Paths given on the command line are relative to the working directory.
      if (f.is_path && !v.empty()) v = fs::absolute(v).string();
      overrides.emplace_back(f.key, v);
    }
  }
  return load_config(a.config, overrides);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

Vec3 parse_vec3(const std::string& s) {
  const auto parts = split_list(s);
  SNP_CHECK(parts.size() == 3, ErrorCode::InvalidArgument, "expected x,y,z: " + s);
  return {std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])};
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  SNP_CHECK(out.good(), ErrorCode::Io, "cannot write " + p.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sculpted neural points: fuse, sculpt, train and render featurized point clouds"};
  app.require_subcommand(1);

  CommonArgs fuse_a, prune_a, add_a, sculpt_a, train_a, render_a, edit_a, bench_a;
  auto* fuse = app.add_subcommand("fuse", "fuse depth maps into a point cloud");
  auto* prune = app.add_subcommand("prune", "drop points that float in front of observed depth");
  auto* add = app.add_subcommand("add", "fit features, then add points along high-error rays");
  auto* sculpt = app.add_subcommand("sculpt", "prune, fit and add (honours ablation flags)");
  auto* train = app.add_subcommand("train", "optimize features, positions and opacity");
  auto* render = app.add_subcommand("render", "render frames (PNG + PFM) and held-out metrics");
  auto* edit = app.add_subcommand("edit", "apply a merge / transform / erase script");
  auto* bench = app.add_subcommand("bench", "synthetic end-to-end experiments to a CSV");
  add_common(fuse, fuse_a);
  add_common(prune, prune_a);
  add_common(add, add_a);
  add_common(sculpt, sculpt_a);
  add_common(train, train_a);
  add_common(render, render_a);
  add_common(edit, edit_a);
  add_common(bench, bench_a);

  std::string bench_scenes = "lambertian-sphere", bench_variants = "full,baseline", bench_seeds = "0", bench_csv,
              bench_work;
  int bench_floaters = 100;
  bool bench_no_hole = false;
  bench->add_option("--scenes", bench_scenes, "comma-separated scene kinds");
  bench->add_option("--variants", bench_variants,
                    "comma-separated: full, baseline, no_prune_no_add, no_add, no_prune, no_refine, no_dropout");
  bench->add_option("--seeds", bench_seeds, "comma-separated scene seeds");
  bench->add_option("--floaters", bench_floaters, "floaters injected per scene");
  bench->add_flag("--no-hole", bench_no_hole, "do not carve a hole");
  bench->add_option("--csv", bench_csv, "output CSV")->required();
  bench->add_option("--work-dir", bench_work, "scene and model directory")->required();

  auto* synth = app.add_subcommand("synth", "write a synthetic scene directory");
  SynthOptions so;
  std::string synth_kind = "lambertian-sphere", synth_out, hole_center;
  bool synth_hole = false;
  synth->add_option("--kind", synth_kind, "lambertian-sphere | specular-sphere | plane-and-box");
  synth->add_option("--seed", so.seed, "scene seed");
  synth->add_option("--floaters", so.floaters, "floaters injected into the depth maps");
  synth->add_option("--floater-factor", so.floater_factor, "floater depth as a fraction of the true depth");
  synth->add_flag("--hole", synth_hole, "carve a hole out of the depth maps");
  synth->add_option("--hole-center", hole_center, "x,y,z (default: upper front of the sphere)");
  so.hole_radius = 0.4;
  synth->add_option("--hole-radius", so.hole_radius, "hole radius");
  synth->add_option("--width", so.width, "image width");
  synth->add_option("--height", so.height, "image height");
  synth->add_option("--output", synth_out, "scene directory")->required();

  auto* report = app.add_subcommand("report", "aggregate experiment CSVs into tables");
  std::vector<std::string> report_inputs;
  std::string report_out;
  report->add_option("--csv", report_inputs, "bench or long-format CSVs")->required()->check(CLI::ExistingFile);
  report->add_option("--output", report_out, "output prefix (writes .txt and .csv)")->required();

  auto* sweep = app.add_subcommand("sweep", "held-out quality and frame time versus ensemble size");
  CommonArgs sweep_a;
  add_common(sweep, sweep_a);
  std::string sweep_ls = "1,2,4";
  sweep->add_option("--ensemble", sweep_ls, "comma-separated ensemble sizes L");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (fuse->parsed()) run_fuse(build_config(fuse, fuse_a));
    else if (prune->parsed()) run_prune(build_config(prune, prune_a));
    else if (add->parsed()) run_add(build_config(add, add_a));
    else if (sculpt->parsed()) run_sculpt(build_config(sculpt, sculpt_a));
    else if (train->parsed()) run_train(build_config(train, train_a));
    else if (render->parsed()) run_render(build_config(render, render_a));
    else if (edit->parsed()) run_edit(build_config(edit, edit_a));
    else if (bench->parsed()) {
      const auto cfg = build_config(bench, bench_a);
      BenchOptions bo;
      bo.scenes.clear();
      for (const auto& s : split_list(bench_scenes)) bo.scenes.push_back(scene_kind_from_string(s));
      bo.variants = split_list(bench_variants);
      bo.seeds.clear();
      for (const auto& s : split_list(bench_seeds)) bo.seeds.push_back(std::stoull(s));
      bo.floaters = bench_floaters;
      bo.hole = !bench_no_hole;
      const auto records = run_bench(cfg, bo, bench_work);
      write_bench_csv(bench_csv, records);
    } else if (synth->parsed()) {
      so.kind = scene_kind_from_string(synth_kind);
      so.hole = synth_hole;
      so.hole_center = hole_center.empty() ? default_hole_center() : parse_vec3(hole_center);
      run_synth(so, synth_out);
    } else if (report->parsed()) {
      std::vector<ExperimentRow> rows;
      for (const auto& f : report_inputs) {
        const auto r = read_rows_csv(f);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      const auto table = aggregate(rows);
      write_file(report_out + ".txt", table.to_text());
      write_file(report_out + ".csv", table.to_csv());
      log_stage("report", {{"rows", std::to_string(rows.size())}, {"variants", std::to_string(table.variants.size())}});
    } else if (sweep->parsed()) {
      const auto cfg = build_config(sweep, sweep_a);
      SNP_CHECK(!cfg.paths.output.empty(), ErrorCode::InvalidArgument, "missing required path: paths.output");
      PlyReadOptions opts;
      opts.default_feature_dim = cfg.feature_dim;
      const auto cloud = read_ply(cfg.paths.input, opts);
      const auto cams = read_cameras(cfg.paths.heldout_cameras);
      const auto refs = read_image_dir(cfg.paths.heldout_images_dir);
      std::vector<int> ls;
      for (const auto& s : split_list(sweep_ls)) ls.push_back(std::stoi(s));
      const auto rows = dropout_sweep(cloud, cams, refs, cfg.inference_render(), ls);
      std::string csv = "subsets,psnr,ssim,seconds_per_frame\n";
      for (const auto& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.6f\n", r.subsets, r.psnr, r.ssim, r.seconds_per_frame);
        csv += buf;
      }
      write_file(cfg.paths.output, csv);
      log_stage("sweep", {std::pair<std::string, std::string>{"ensembles", std::to_string(rows.size())}});
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
