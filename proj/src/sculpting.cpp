#include "snp/sculpting.hpp"

#include "snp/error.hpp"

#include <cmath>
#include <limits>

namespace snp {

void SceneBounds::validate() const {
  SNP_CHECK(std::isfinite(z_near) && z_near > 0.0 && z_near < z_far, ErrorCode::InvalidBounds,
            "need 0 < z_near < z_far (got " + std::to_string(z_near) + ", " + std::to_string(z_far) + ")");
  SNP_CHECK(std::isfinite(z_far) || mode == DepthSampling::InverseDepth, ErrorCode::InvalidBounds,
            "z_far = inf needs inverse-depth sampling");
  SNP_CHECK(n_bins >= 1, ErrorCode::InvalidBounds, "n_bins must be >= 1");
}

namespace {

// Fused-order positions and their source map.
struct MapPoints {
  std::vector<Vec3> points;
  std::vector<int> source;
};

MapPoints unproject_maps(std::span<const DepthMap> maps) {
  MapPoints mp;
  for (std::size_t m = 0; m < maps.size(); ++m) {
    const DepthMap& d = maps[m];
    for (int row = 0; row < d.height; ++row)
      for (int col = 0; col < d.width; ++col) {
        if (!d.is_valid(col, row)) continue;
        mp.points.push_back(unproject({d.pixel_u(col), d.pixel_v(row), d.value(col, row)}, d.camera));
        mp.source.push_back(static_cast<int>(m));
      }
  }
  return mp;
}

bool consistent(const Vec3& p, std::span<const DepthMap> maps, int skip, double delta_d) {
  for (std::size_t j = 0; j < maps.size(); ++j) {
    if (static_cast<int>(j) == skip) continue;
    const double z = depth_in_view(p, maps[j].camera);
    if (!(z > 0.0)) continue;
    const PixelDepth q = project(p, maps[j].camera);
    const auto d = maps[j].lookup(q.u, q.v);
    if (d && z < delta_d * *d) return false;
  }
  return true;
}

std::vector<std::uint8_t> keep_mask(std::span<const Vec3> points, std::span<const int> source,
                                    std::span<const DepthMap> maps, double delta_d) {
  SNP_CHECK(delta_d > 0.0 && delta_d <= 1.0, ErrorCode::InvalidArgument, "delta_d must be in (0, 1]");
  std::vector<std::uint8_t> keep(points.size());
  const auto n = static_cast<std::int64_t>(points.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    keep[i] = consistent(points[i], maps, source.empty() ? -1 : source[i], delta_d) ? 1 : 0;
  return keep;
}

}  // namespace

std::vector<std::uint8_t> forward_consistency_prune(std::span<const DepthMap> maps, double delta_d) {
  const MapPoints mp = unproject_maps(maps);
  return keep_mask(mp.points, mp.source, maps, delta_d);
}

std::vector<std::uint8_t> consistency_keep_mask(std::span<const Vec3> points, std::span<const DepthMap> maps,
                                                double delta_d) {
  return keep_mask(points, {}, maps, delta_d);
}

double colmap_consistency_error(double u, double v, const DepthMap& map_i, const DepthMap& map_j) {
  const auto d_p = map_i.lookup(u, v);
  SNP_CHECK(d_p.has_value(), ErrorCode::InvalidArgument, "no valid depth at the source pixel");
  const Vec3 X = unproject({u, v, *d_p}, map_i.camera);
  const Camera& cj = map_j.camera;
  SNP_CHECK(depth_in_view(X, cj) > 0.0, ErrorCode::OutOfImage, "correspondence is behind camera j");
  const PixelDepth q = project(X, cj);
  SNP_CHECK(std::round(q.u) >= 0.0 && std::round(q.u) <= cj.width() - 1 && std::round(q.v) >= 0.0 &&
                std::round(q.v) <= cj.height() - 1,
            ErrorCode::OutOfImage, "correspondence leaves image j");
  const auto d_q = map_j.lookup(q.u, q.v);
  SNP_CHECK(d_q.has_value(), ErrorCode::InvalidArgument, "no valid depth at the correspondence");
  const Vec3 Y = unproject({q.u, q.v, *d_q}, cj);
  SNP_CHECK(depth_in_view(Y, map_i.camera) > 0.0, ErrorCode::OutOfImage, "back-projection is behind camera i");
  const PixelDepth back = project(Y, map_i.camera);
  return std::hypot(back.u - u, back.v - v);
}

std::vector<std::uint8_t> colmap_consistency_prune(std::span<const DepthMap> maps, double max_error,
                                                   int min_consistent_views) {
  std::vector<std::size_t> offsets{0};
  for (const auto& m : maps) offsets.push_back(offsets.back() + m.valid_count());
  std::vector<std::uint8_t> keep(offsets.back(), 0);
  const auto n_maps = static_cast<std::int64_t>(maps.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n_maps; ++i) {
    const DepthMap& mi = maps[i];
    std::size_t k = offsets[i];
    for (int row = 0; row < mi.height; ++row)
      for (int col = 0; col < mi.width; ++col) {
        if (!mi.is_valid(col, row)) continue;
        int agree = 0;
        for (std::int64_t j = 0; j < n_maps; ++j) {
          if (j == i) continue;
          try {
            if (colmap_consistency_error(mi.pixel_u(col), mi.pixel_v(row), mi, maps[j]) <= max_error) ++agree;
          } catch (const Error&) {
          }
        }
        keep[k++] = agree >= min_consistent_views ? 1 : 0;
      }
  }
  return keep;
}

std::vector<ErrorMap> compute_error_maps(const FeaturizedPointCloud& cloud, std::span<const TrainView> views,
                                         const RenderConfig& config) {
  std::vector<ErrorMap> out;
  out.reserve(views.size());
  for (const auto& view : views) {
    const Image pred = rasterize(cloud, view.camera, config).image;
    SNP_CHECK(pred.same_shape(view.image), ErrorCode::ShapeMismatch, "reference image shape differs from render");
    ErrorMap e{pred.width, pred.height, std::vector<double>(pred.pixel_count(), 0.0)};
    for (std::size_t p = 0; p < e.values.size(); ++p)
      for (int c = 0; c < pred.channels; ++c)
        e.values[p] += std::abs(pred.data[p * pred.channels + c] - view.image.data[p * pred.channels + c]);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<double> candidate_depths(const SceneBounds& b) {
  b.validate();
  std::vector<double> z(b.n_bins);
  const int n = b.n_bins;
  if (n == 1) return {b.z_near};
  for (int k = 0; k < n; ++k) {
    if (b.mode == DepthSampling::Linear) {
      z[k] = k == n - 1 ? b.z_far : b.z_near + k * ((b.z_far - b.z_near) / (n - 1));
    } else if (std::isfinite(b.z_far)) {
      const double inv = 1.0 / b.z_near + k * ((1.0 / b.z_far - 1.0 / b.z_near) / (n - 1));
      z[k] = k == n - 1 ? b.z_far : 1.0 / inv;
    } else {
      // Inverse depth uniform on (0, 1/z_near]; the last bin stays finite.
      z[k] = 1.0 / ((1.0 / b.z_near) * (1.0 - static_cast<double>(k) / n));
    }
  }
  return z;
}

std::vector<Vec3> sample_candidates(const Camera& camera, double u, double v, const SceneBounds& bounds) {
  const auto depths = candidate_depths(bounds);
  std::vector<Vec3> out;
  out.reserve(depths.size());
  for (double z : depths) out.push_back(unproject({u, v, z}, camera));
  return out;
}

bool evaluate_candidate(const Vec3& c, std::span<const DepthMap> maps, double eps_occ) {
  for (const auto& m : maps) {
    const double z = depth_in_view(c, m.camera);
    if (!(z > 0.0)) continue;
    const PixelDepth p = project(c, m.camera);
    const auto d = m.lookup(p.u, p.v);
    if (d && z < (1.0 - eps_occ) * *d) return false;
  }
  return true;
}

AddResult add_points(const FeaturizedPointCloud& cloud, std::span<const Camera> cameras,
                     std::span<const ErrorMap> error_maps, std::span<const DepthMap> maps,
                     const AddConfig& config) {
  config.bounds.validate();
  SNP_CHECK(cameras.size() == error_maps.size(), ErrorCode::DimMismatch, "one camera per error map");
  SNP_CHECK(config.max_per_pixel >= 1, ErrorCode::InvalidArgument, "M must be >= 1");
  SNP_CHECK(config.delta_e_factor >= 0.0, ErrorCode::InvalidArgument, "delta_e factor must be >= 0");

  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < error_maps.size(); ++i) {
    SNP_CHECK(error_maps[i].width == cameras[i].width() && error_maps[i].height == cameras[i].height(),
              ErrorCode::ShapeMismatch, "error map shape differs from its camera");
    for (double e : error_maps[i].values) sum += e;
    count += error_maps[i].values.size();
  }
  AddResult result;
  result.cloud = cloud;
  result.delta_e = count ? config.delta_e_factor * sum / static_cast<double>(count) : 0.0;
  const auto depths = candidate_depths(config.bounds);

  for (std::size_t i = 0; i < error_maps.size(); ++i) {
    const ErrorMap& em = error_maps[i];
    const auto n_pix = static_cast<std::int64_t>(em.values.size());
    std::vector<std::vector<double>> accepted(n_pix);
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t p = 0; p < n_pix; ++p) {
      const double e = em.values[p];
      if (!(e > 0.0) || e < result.delta_e) continue;
      const double u = static_cast<double>(p % em.width), v = static_cast<double>(p / em.width);
      for (double z : depths) {
        if (evaluate_candidate(unproject({u, v, z}, cameras[i]), maps, config.eps_occ)) {
          accepted[p].push_back(z);
          if (static_cast<int>(accepted[p].size()) == config.max_per_pixel) break;
        }
      }
    }
    for (std::int64_t p = 0; p < n_pix; ++p) {
      const double e = em.values[p];
      if (e > 0.0 && e >= result.delta_e) ++result.triggering_pixels;
      const int x = static_cast<int>(p % em.width), y = static_cast<int>(p / em.width);
      for (double z : accepted[p]) {
        result.cloud.push_back(unproject({double(x), double(y), z}, cameras[i]));
        result.added.push_back({static_cast<int>(i), x, y, z});
      }
    }
  }
  return result;
}

SculptResult sculpt(const FeaturizedPointCloud& cloud, std::span<const DepthMap> maps,
                    std::span<const TrainView> views, const RenderConfig& render, const SculptConfig& config) {
  cloud.validate();
  SNP_CHECK(config.rounds >= 1, ErrorCode::InvalidArgument, "rounds must be >= 1");
  SculptResult r;
  r.report.n_input = cloud.size();
  FeaturizedPointCloud current = cloud;
  if (config.prune) {
    r.keep = consistency_keep_mask(cloud.positions, maps, config.delta_d);
    current = select(cloud, r.keep);
  } else {
    r.keep.assign(cloud.size(), 1);
  }
  r.report.pruned = cloud.size() - current.size();
  r.report.n_after_prune = current.size();

  if (config.add_points) {
    SNP_CHECK(!views.empty(), ErrorCode::EmptyInput, "point adding needs training views");
    RenderConfig clean = render;
    clean.dropout_rate = 0.0;
    TrainConfig fit = config.optimize;
    fit.dropout = false;
    std::vector<Camera> cameras;
    for (const auto& v : views) cameras.push_back(v.camera);
    for (int round = 0; round < config.rounds; ++round) {
      const FeaturizedPointCloud fitted = train(current, views, clean, fit).cloud;
      const auto errors = compute_error_maps(fitted, views, clean);
      AddResult add = add_points(current, cameras, errors, maps, config.add);
      r.report.triggering_pixels += add.triggering_pixels;
      r.report.delta_e = add.delta_e;
      r.added.insert(r.added.end(), add.added.begin(), add.added.end());
      current = std::move(add.cloud);
    }
  }
  r.report.added = r.added.size();
  std::fill(current.features.begin(), current.features.end(), 0.0);
  std::fill(current.opacity_logits.begin(), current.opacity_logits.end(), kInitialOpacityLogit);
  r.report.n_output = current.size();
  r.cloud = std::move(current);
  return r;
}

}  // namespace snp
