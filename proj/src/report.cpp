#include "snp/report.hpp"

#include "snp/error.hpp"
#include "snp/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace snp {

namespace {

const std::set<std::string>& known_metrics() {
  static const std::set<std::string> m{"psnr", "ssim", "l1", "fps", "n_points", "pruned", "added"};
  return m;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

double sorted_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": bad number '" + s + "'");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  SNP_CHECK(out.good(), ErrorCode::Io, "cannot write " + path.string());
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  SNP_CHECK(in.good(), ErrorCode::Io, "cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

bool is_known_metric(const std::string& metric) { return known_metrics().contains(metric); }

AggregateTable aggregate(std::span<const ExperimentRow> rows) {
  SNP_CHECK(!rows.empty(), ErrorCode::EmptyInput, "no rows to aggregate");
  std::map<std::pair<std::string, std::string>, std::vector<double>> by_variant;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> by_scene;
  std::set<std::string> variants, scenes, metrics;
  for (const auto& r : rows) {
    SNP_CHECK(is_known_metric(r.metric), ErrorCode::InvalidArgument, "unknown metric '" + r.metric + "'");
    by_variant[{r.variant, r.metric}].push_back(r.value);
    by_scene[{r.variant, r.metric, r.scene}].push_back(r.value);
    variants.insert(r.variant);
    scenes.insert(r.scene);
    metrics.insert(r.metric);
  }
  AggregateTable t;
  t.variants.assign(variants.begin(), variants.end());
  t.scenes.assign(scenes.begin(), scenes.end());
  t.metrics.assign(metrics.begin(), metrics.end());
  for (auto& [k, v] : by_variant) t.mean[k] = sorted_mean(v);
  for (auto& [k, v] : by_scene) t.per_scene[k] = sorted_mean(v);
  return t;
}

std::string AggregateTable::to_text() const {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"variant", "metric", "mean"};
  header.insert(header.end(), scenes.begin(), scenes.end());
  cells.push_back(header);
  for (const auto& v : variants)
    for (const auto& m : metrics) {
      const auto it = mean.find({v, m});
      if (it == mean.end()) continue;
      std::vector<std::string> row{v, m, fmt_short(it->second)};
      for (const auto& s : scenes) {
        const auto ps = per_scene.find({v, m, s});
        row.push_back(ps == per_scene.end() ? "-" : fmt_short(ps->second));
      }
      cells.push_back(row);
    }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const bool left = c < 2;
      const std::string pad(width[c] - row[c].size(), ' ');
      out += left ? row[c] + pad : pad + row[c];
      out += c + 1 < row.size() ? "  " : "\n";
    }
  }
  return out;
}

std::string AggregateTable::to_csv() const {
  std::string out = "variant,metric,mean";
  for (const auto& s : scenes) out += "," + s;
  out += "\n";
  for (const auto& v : variants)
    for (const auto& m : metrics) {
      const auto it = mean.find({v, m});
      if (it == mean.end()) continue;
      out += v + "," + m + "," + fmt(it->second);
      for (const auto& s : scenes) {
        const auto ps = per_scene.find({v, m, s});
        out += "," + (ps == per_scene.end() ? std::string() : fmt(ps->second));
      }
      out += "\n";
    }
  return out;
}

std::string bench_csv_header() {
  return "scene,variant,seed,n_points,pruned,added,train_psnr,train_ssim,heldout_psnr,heldout_ssim,seconds";
}

std::string to_csv_line(const BenchRecord& r) {
  return r.scene + "," + r.variant + "," + std::to_string(r.seed) + "," + std::to_string(r.n_points) + "," +
         std::to_string(r.pruned) + "," + std::to_string(r.added) + "," + fmt(r.train_psnr) + "," +
         fmt(r.train_ssim) + "," + fmt(r.heldout_psnr) + "," + fmt(r.heldout_ssim) + "," + fmt(r.seconds);
}

void write_bench_csv(const std::filesystem::path& path, std::span<const BenchRecord> records) {
  auto out = open_out(path);
  out << bench_csv_header() << "\n";
  for (const auto& r : records) out << to_csv_line(r) << "\n";
  SNP_CHECK(out.good(), ErrorCode::Io, "write failed: " + path.string());
}

std::vector<BenchRecord> read_bench_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  SNP_CHECK(!lines.empty() && lines[0] == bench_csv_header(), ErrorCode::ParseError,
            path.string() + ": not a bench CSV (header mismatch)");
  std::vector<BenchRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto c = split(lines[i]);
    SNP_CHECK(c.size() == 11, ErrorCode::ParseError,
              path.string() + ":" + std::to_string(i + 1) + ": expected 11 columns");
    auto num = [&](int k) { return parse_double(c[k], path, i + 1); };
    BenchRecord r;
    r.scene = c[0];
    r.variant = c[1];
    r.seed = static_cast<std::uint64_t>(num(2));
    r.n_points = static_cast<std::size_t>(num(3));
    r.pruned = static_cast<std::size_t>(num(4));
    r.added = static_cast<std::size_t>(num(5));
    r.train_psnr = num(6);
    r.train_ssim = num(7);
    r.heldout_psnr = num(8);
    r.heldout_ssim = num(9);
    r.seconds = num(10);
    out.push_back(r);
  }
  return out;
}

std::vector<ExperimentRow> to_rows(const BenchRecord& r) {
  // Quality metrics come from the held-out views.
  return {
      {r.scene, r.variant, "psnr", r.heldout_psnr, r.seconds, r.seed},
      {r.scene, r.variant, "ssim", r.heldout_ssim, r.seconds, r.seed},
      {r.scene, r.variant, "n_points", static_cast<double>(r.n_points), r.seconds, r.seed},
      {r.scene, r.variant, "pruned", static_cast<double>(r.pruned), r.seconds, r.seed},
      {r.scene, r.variant, "added", static_cast<double>(r.added), r.seconds, r.seed},
  };
}

void write_rows_csv(const std::filesystem::path& path, std::span<const ExperimentRow> rows) {
  auto out = open_out(path);
  out << "scene,variant,metric,value,seconds,seed\n";
  for (const auto& r : rows)
    out << r.scene << "," << r.variant << "," << r.metric << "," << fmt(r.value) << "," << fmt(r.seconds) << ","
        << r.seed << "\n";
  SNP_CHECK(out.good(), ErrorCode::Io, "write failed: " + path.string());
}

std::vector<ExperimentRow> read_rows_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  SNP_CHECK(!lines.empty(), ErrorCode::ParseError, path.string() + ": empty file");
  std::vector<ExperimentRow> out;
  if (lines[0] == bench_csv_header()) {
    for (const auto& r : read_bench_csv(path)) {
      const auto rows = to_rows(r);
      out.insert(out.end(), rows.begin(), rows.end());
    }
    return out;
  }
  SNP_CHECK(lines[0] == "scene,variant,metric,value,seconds,seed", ErrorCode::ParseError,
            path.string() + ": unrecognized CSV header");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto c = split(lines[i]);
    SNP_CHECK(c.size() == 6, ErrorCode::ParseError,
              path.string() + ":" + std::to_string(i + 1) + ": expected 6 columns");
    out.push_back({c[0], c[1], c[2], parse_double(c[3], path, i + 1), parse_double(c[4], path, i + 1),
                   static_cast<std::uint64_t>(parse_double(c[5], path, i + 1))});
  }
  return out;
}

std::vector<SweepRow> dropout_sweep(const FeaturizedPointCloud& cloud, std::span<const Camera> cameras,
                                    std::span<const Image> references, const RenderConfig& config,
                                    std::span<const int> subset_counts) {
  SNP_CHECK(cameras.size() == references.size(), ErrorCode::DimMismatch, "one reference image per camera");
  SNP_CHECK(!cameras.empty(), ErrorCode::EmptyInput, "no held-out cameras");
  std::vector<SweepRow> out;
  for (int L : subset_counts) {
    RenderConfig cfg = config;
    cfg.subsets = L;
    SweepRow row;
    row.subsets = L;
    double seconds = 0.0;
    for (std::size_t i = 0; i < cameras.size(); ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const Image img = rasterize_ensemble(cloud, cameras[i], cfg).image;
      seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      row.psnr += psnr(img, references[i]);
      row.ssim += img.width >= 11 && img.height >= 11 ? ssim(img, references[i]) : 0.0;
    }
    const double n = static_cast<double>(cameras.size());
    row.psnr /= n;
    row.ssim /= n;
    row.seconds_per_frame = seconds / n;
    out.push_back(row);
  }
  return out;
}

}  // namespace snp
