#pragma once

#include "snp/geometry.hpp"
#include "snp/image.hpp"
#include "snp/pointcloud.hpp"
#include "snp/rasterizer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace snp {

// Long-format result: one metric value of one run.
struct ExperimentRow {
  std::string scene;
  std::string variant;
  std::string metric;  // psnr | ssim | l1 | fps | n_points | pruned | added
  double value = 0.0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
};

bool is_known_metric(const std::string& metric);

struct AggregateTable {
  std::vector<std::string> variants;
  std::vector<std::string> scenes;
  std::vector<std::string> metrics;
  std::map<std::pair<std::string, std::string>, double> mean;  // (variant, metric)
  std::map<std::tuple<std::string, std::string, std::string>, double> per_scene;  // (variant, metric, scene)

  // One line per (variant, metric): mean followed by one column per scene.
  std::string to_text() const;
  std::string to_csv() const;
};

// Means per (variant, metric) and per (variant, metric, scene). Values are
// summed in sorted order, so any permutation of `rows` gives identical bits.
// Throws EmptyInput, InvalidArgument for an unknown metric.
AggregateTable aggregate(std::span<const ExperimentRow> rows);

// Wide per-run record written by the bench subcommand.
struct BenchRecord {
  std::string scene;
  std::string variant;
  std::uint64_t seed = 0;
  std::size_t n_points = 0;
  std::size_t pruned = 0;
  std::size_t added = 0;
  double train_psnr = 0.0;
  double train_ssim = 0.0;
  double heldout_psnr = 0.0;
  double heldout_ssim = 0.0;
  double seconds = 0.0;
};

std::string bench_csv_header();
std::string to_csv_line(const BenchRecord& r);
void write_bench_csv(const std::filesystem::path& path, std::span<const BenchRecord> records);
std::vector<BenchRecord> read_bench_csv(const std::filesystem::path& path);
std::vector<ExperimentRow> to_rows(const BenchRecord& r);

// Long-format CSV: scene,variant,metric,value,seconds,seed.
void write_rows_csv(const std::filesystem::path& path, std::span<const ExperimentRow> rows);
// Reads either the long format or the bench format (detected from the header).
std::vector<ExperimentRow> read_rows_csv(const std::filesystem::path& path);

struct SweepRow {
  int subsets = 1;
  double psnr = 0.0;
  double ssim = 0.0;
  double seconds_per_frame = 0.0;
};

// Held-out quality and frame time of the dropout ensemble for each L.
std::vector<SweepRow> dropout_sweep(const FeaturizedPointCloud& cloud, std::span<const Camera> cameras,
                                    std::span<const Image> references, const RenderConfig& config,
                                    std::span<const int> subset_counts);

}  // namespace snp
