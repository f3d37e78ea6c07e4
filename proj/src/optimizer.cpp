#include "snp/optimizer.hpp"

#include "raster_common.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace snp {

Gradients Gradients::zeros(std::size_t n, int feature_dim) {
  Gradients g;
  g.d_positions.assign(n, Vec3::Zero());
  g.d_features.assign(n * feature_dim, 0.0);
  g.d_opacity_logits.assign(n, 0.0);
  return g;
}

namespace {

void check_same_shape(const Image& a, const Image& b) {
  SNP_CHECK(a.same_shape(b), ErrorCode::ShapeMismatch,
            "image shapes differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                std::to_string(a.channels) + " vs " + std::to_string(b.width) + "x" +
                std::to_string(b.height) + "x" + std::to_string(b.channels));
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

double l1_loss(const Image& pred, const Image& target) {
  check_same_shape(pred, target);
  SNP_CHECK(!pred.data.empty(), ErrorCode::ShapeMismatch, "empty image");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) acc += std::abs(pred.data[i] - target.data[i]);
  return acc / static_cast<double>(pred.data.size());
}

Image l1_loss_grad(const Image& pred, const Image& target) {
  check_same_shape(pred, target);
  Image g(pred.width, pred.height, pred.channels);
  const double inv = 1.0 / static_cast<double>(pred.data.size());
  for (std::size_t i = 0; i < pred.data.size(); ++i) g.data[i] = sign(pred.data[i] - target.data[i]) * inv;
  return g;
}

double tv_loss(const Image& img) {
  double acc = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const double v = img.at(x, y, c);
        if (y + 1 < img.height) acc += std::abs(img.at(x, y + 1, c) - v);
        if (x + 1 < img.width) acc += std::abs(img.at(x + 1, y, c) - v);
      }
  return acc;
}

Image tv_loss_grad(const Image& img) {
  Image g(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const double v = img.at(x, y, c);
        if (y + 1 < img.height) {
          const double s = sign(img.at(x, y + 1, c) - v);
          g.at(x, y + 1, c) += s;
          g.at(x, y, c) -= s;
        }
        if (x + 1 < img.width) {
          const double s = sign(img.at(x + 1, y, c) - v);
          g.at(x + 1, y, c) += s;
          g.at(x, y, c) -= s;
        }
      }
  return g;
}

Gradients backward(const RenderOutput& output, const Image& d_image, const FeaturizedPointCloud& cloud,
                   const Camera& camera, const RenderConfig& config) {
  using namespace detail;
  SNP_CHECK(output.cloud_fingerprint == cloud.fingerprint(), ErrorCode::StaleGraph,
            "cloud changed since the forward pass");
  const RenderSetup s = make_setup(cloud, camera, config);
  SNP_CHECK(s.radius_px == output.radius_px && s.width == output.image.width &&
                s.height == output.image.height && s.channels == output.image.channels,
            ErrorCode::StaleGraph, "camera or config differ from the forward pass");
  check_same_shape(d_image, output.image);

  const int C = s.channels;
  const int K = cloud.feature_dim;
  const std::size_t n = cloud.size();
  const std::size_t n_pix = output.image.pixel_count();
  const std::size_t m = output.contributors.size();
  Gradients grads = Gradients::zeros(n, K);
  if (m == 0) return grads;

  // Points referenced by any pixel, with their colors and SH bases.
  std::vector<std::uint32_t> refs(n + 1, 0);
  for (const auto& c : output.contributors) ++refs[c.point + 1];
  std::vector<std::uint32_t> used;
  for (std::size_t i = 0; i < n; ++i)
    if (refs[i + 1]) used.push_back(static_cast<std::uint32_t>(i));
  std::vector<double> colors(n * C, 0.0);
  std::vector<ShBasis> bases(n);
  const auto n_used = static_cast<std::int64_t>(used.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < n_used; ++k) {
    const std::uint32_t i = used[k];
    bases[i] = sh_basis_unchecked(view_direction(s, cloud.positions[i]));
    point_color(s, cloud, i, colors.data() + static_cast<std::size_t>(i) * C);
  }

  // Per-contributor partials: d loss / d log-weight and w * dL/dI.
  std::vector<double> d_logw(m);
  std::vector<double> w_grad(m * C);
  const auto n_pix_i = static_cast<std::int64_t>(n_pix);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < n_pix_i; ++p) {
    const double* G = d_image.data.data() + p * C;
    const double* I = output.image.data.data() + p * C;
    double gI = 0.0;
    for (int c = 0; c < C; ++c) gI += G[c] * I[c];
    for (std::uint64_t j = output.pixel_offsets[p]; j < output.pixel_offsets[p + 1]; ++j) {
      const auto& ct = output.contributors[j];
      const double* col = colors.data() + static_cast<std::size_t>(ct.point) * C;
      double gs = 0.0;
      for (int c = 0; c < C; ++c) {
        gs += G[c] * col[c];
        w_grad[j * C + c] = ct.weight * G[c];
      }
      d_logw[j] = ct.weight * (gs - gI);
    }
  }

  // Point -> contributor index (ascending), so each point sums in a fixed order.
  for (std::size_t i = 0; i < n; ++i) refs[i + 1] += refs[i];
  std::vector<std::uint64_t> by_point(m);
  {
    std::vector<std::uint32_t> cursor(refs.begin(), refs.end() - 1);
    for (std::size_t j = 0; j < m; ++j) by_point[cursor[output.contributors[j].point]++] = j;
  }

  const double r2 = s.radius_px * s.radius_px;
  const double d_closeness = -1.0 / (s.gamma * (s.z_far - s.z_near));
  const Mat3& Km = camera.intrinsics();
  const Mat3& R = camera.rotation();
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < n_used; ++k) {
    const std::uint32_t i = used[k];
    std::vector<double> acc_wg(C, 0.0);
    double a = 0.0, ax = 0.0, ay = 0.0;
    for (std::uint32_t q = refs[i]; q < refs[i + 1]; ++q) {
      const std::uint64_t j = by_point[q];
      const auto& ct = output.contributors[j];
      const double coverage = 1.0 - (ct.dx * ct.dx + ct.dy * ct.dy) / r2;
      a += d_logw[j];
      ax += d_logw[j] * ct.dx / coverage;
      ay += d_logw[j] * ct.dy / coverage;
      for (int c = 0; c < C; ++c) acc_wg[c] += w_grad[j * C + c];
    }
    const ShBasis& b = bases[i];
    double* df = grads.d_features.data() + static_cast<std::size_t>(i) * K;
    for (int c = 0; c < C; ++c)
      for (int kk = 0; kk < kShBasisSize; ++kk) df[c * kShBasisSize + kk] = acc_wg[c] * b[kk];

    grads.d_opacity_logits[i] = a * (1.0 - sigmoid(cloud.opacity_logits[i]));

    const Vec3 pc = camera.to_camera(cloud.positions[i]);
    const double X = pc.x(), Y = pc.y(), Z = pc.z();
    const double du = ax * 2.0 / r2;
    const double dv = ay * 2.0 / r2;
    const double dz = a * d_closeness;
    const Vec3 grad_u(Km(0, 0) / Z, Km(0, 1) / Z, -(Km(0, 0) * X + Km(0, 1) * Y) / (Z * Z));
    const Vec3 grad_v(0.0, Km(1, 1) / Z, -Km(1, 1) * Y / (Z * Z));
    const Vec3 g_cam = du * grad_u + dv * grad_v + Vec3(0.0, 0.0, dz);
    Vec3 g_pos = R.transpose() * g_cam;

    if (s.view_directions == ViewDirectionMode::PerPoint) {
      const Vec3 d = s.center - cloud.positions[i];
      const double len = d.norm();
      if (len > 0.0) {
        const Vec3 v = d / len;
        const auto jac = sh_basis_jacobian(v);
        const double* f = cloud.features.data() + static_cast<std::size_t>(i) * K;
        Vec3 g_v = Vec3::Zero();
        for (int kk = 0; kk < kShBasisSize; ++kk) {
          double g_b = 0.0;
          for (int c = 0; c < C; ++c) g_b += acc_wg[c] * f[c * kShBasisSize + kk];
          g_v += g_b * jac[kk];
        }
        // v = (center - p) / |center - p|  =>  dv/dp = -(I - v v^T) / |d|
        g_pos -= (g_v - v * v.dot(g_v)) / len;
      }
    }
    grads.d_positions[i] = g_pos;
  }
  return grads;
}

OptimState OptimState::for_cloud(const FeaturizedPointCloud& cloud) {
  OptimState s;
  s.m_features.assign(cloud.features.size(), 0.0);
  s.v_features.assign(cloud.features.size(), 0.0);
  s.m_positions.assign(cloud.size() * 3, 0.0);
  s.v_positions.assign(cloud.size() * 3, 0.0);
  s.m_opacity.assign(cloud.size(), 0.0);
  s.v_opacity.assign(cloud.size(), 0.0);
  return s;
}

namespace {

void adam_update(double* param, const double* grad, double* m, double* v, std::size_t count, double lr,
                 const AdamConfig& adam, double bc1, double bc2) {
  const auto n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * grad[i];
    v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + adam.eps);
  }
}

}  // namespace

void adam_step(FeaturizedPointCloud& params, const Gradients& grads, OptimState& state,
               const LearningRates& lr, const AdamConfig& adam) {
  const std::size_t n = params.size();
  SNP_CHECK(grads.d_positions.size() == n && grads.d_opacity_logits.size() == n &&
                grads.d_features.size() == params.features.size(),
            ErrorCode::DimMismatch, "gradient shapes differ from parameters");
  SNP_CHECK(state.m_features.size() == params.features.size() && state.m_opacity.size() == n &&
                state.m_positions.size() == n * 3,
            ErrorCode::DimMismatch, "optimizer state shapes differ from parameters");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(adam.beta1, t);
  const double bc2 = 1.0 - std::pow(adam.beta2, t);
  if (lr.features != 0.0)
    adam_update(params.features.data(), grads.d_features.data(), state.m_features.data(),
                state.v_features.data(), params.features.size(), lr.features, adam, bc1, bc2);
  if (lr.opacity != 0.0)
    adam_update(params.opacity_logits.data(), grads.d_opacity_logits.data(), state.m_opacity.data(),
                state.v_opacity.data(), n, lr.opacity, adam, bc1, bc2);
  if (lr.positions != 0.0) {
    static_assert(sizeof(Vec3) == 3 * sizeof(double));
    adam_update(params.positions.empty() ? nullptr : params.positions.front().data(),
                grads.d_positions.empty() ? nullptr : grads.d_positions.front().data(),
                state.m_positions.data(), state.v_positions.data(), n * 3, lr.positions, adam, bc1, bc2);
  }
}

double schedule_factor(LrSchedule schedule, std::int64_t step, std::int64_t total_steps) {
  if (schedule == LrSchedule::Constant || total_steps <= 1) return 1.0;
  // One-cycle: cosine warm-up from 1/25 to 1 over the first 30%, then cosine
  // decay to 1/(25 * 1e4).
  constexpr double kPctStart = 0.3, kDiv = 25.0, kFinalDiv = 1e4;
  const double initial = 1.0 / kDiv, final_ = initial / kFinalDiv;
  const double up_steps = std::max(1.0, kPctStart * static_cast<double>(total_steps) - 1.0);
  const double t = static_cast<double>(step);
  auto cos_interp = [](double from, double to, double frac) {
    return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  };
  if (t <= up_steps) return cos_interp(initial, 1.0, t / up_steps);
  const double down = std::max(1.0, static_cast<double>(total_steps - 1) - up_steps);
  return cos_interp(1.0, final_, std::min(1.0, (t - up_steps) / down));
}

TrainResult train(FeaturizedPointCloud cloud, std::span<const TrainView> views, const RenderConfig& render,
                  const TrainConfig& config) {
  cloud.validate();
  render.validate();
  SNP_CHECK(!views.empty(), ErrorCode::EmptyInput, "training needs at least one view");
  SNP_CHECK(config.steps >= 0, ErrorCode::InvalidArgument, "steps must be >= 0");
  SNP_CHECK(config.max_sh_degree >= 0 && config.max_sh_degree <= 2, ErrorCode::InvalidArgument,
            "max_sh_degree must be 0, 1 or 2");
  const int channels = cloud.feature_dim / kShBasisSize;
  for (const auto& v : views)
    SNP_CHECK(v.image.channels == channels && v.image.width == v.camera.width() &&
                  v.image.height == v.camera.height(),
              ErrorCode::ShapeMismatch, "training image does not match camera / feature_dim");

  TrainResult result;
  result.state = OptimState::for_cloud(cloud);
  result.history.reserve(config.steps);
  const int kept_bands = (config.max_sh_degree + 1) * (config.max_sh_degree + 1);
  std::mt19937_64 rng(config.seed);

  for (int step = 0; step < config.steps; ++step) {
    const auto& view = views[rng() % views.size()];
    std::vector<std::uint8_t> mask;
    const std::uint64_t mask_seed = rng();
    if (config.dropout && render.dropout_rate > 0.0)
      mask = std::move(sample_subsets(cloud.size(), render.dropout_rate, 1, mask_seed)[0]);

    const RenderOutput out = rasterize(cloud, view.camera, render, mask);
    LossRecord rec;
    rec.step = step;
    rec.l1 = l1_loss(out.image, view.image);
    const double tv_scale = config.tv_normalization == TvNormalization::Mean
                                ? 1.0 / static_cast<double>(out.image.data.size())
                                : 1.0;
    rec.tv = tv_loss(out.image) * tv_scale;
    rec.total = rec.l1 + config.lambda_tv * rec.tv;
    result.history.push_back(rec);

    Image d_image = l1_loss_grad(out.image, view.image);
    if (config.lambda_tv != 0.0) {
      const Image d_tv = tv_loss_grad(out.image);
      const double k = config.lambda_tv * tv_scale;
      for (std::size_t i = 0; i < d_image.data.size(); ++i) d_image.data[i] += k * d_tv.data[i];
    }
    Gradients g = backward(out, d_image, cloud, view.camera, render);
    if (kept_bands < kShBasisSize)
      for (std::size_t r = 0; r < g.d_features.size(); r += kShBasisSize)
        for (int k = kept_bands; k < kShBasisSize; ++k) g.d_features[r + k] = 0.0;

    const double f = schedule_factor(config.schedule, step, config.steps);
    LearningRates lr{config.lr.features * f, config.freeze_positions ? 0.0 : config.lr.positions * f,
                     config.freeze_opacity ? 0.0 : config.lr.opacity * f};
    adam_step(cloud, g, result.state, lr, config.adam);
    if (config.on_checkpoint && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0)
      config.on_checkpoint(step + 1, cloud);
  }
  result.cloud = std::move(cloud);
  return result;
}

}  // namespace snp
