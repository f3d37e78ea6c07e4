#pragma once

#include "snp/image.hpp"
#include "snp/pointcloud.hpp"
#include "snp/rasterizer.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace snp {

// Same shapes as the cloud's learnable fields.
struct Gradients {
  std::vector<Vec3> d_positions;
  std::vector<double> d_features;
  std::vector<double> d_opacity_logits;

  static Gradients zeros(std::size_t n, int feature_dim);
};

// Mean absolute difference over pixels and channels.
double l1_loss(const Image& pred, const Image& target);
Image l1_loss_grad(const Image& pred, const Image& target);

// Sum of absolute forward differences along both axes, over all channels.
double tv_loss(const Image& image);
Image tv_loss_grad(const Image& image);

// Analytic reverse pass of `rasterize`. The covered-pixel sets and kept
// contributors recorded in `output` are treated as constants. Throws
// StaleGraph when `cloud` is not the cloud that produced `output`.
Gradients backward(const RenderOutput& output, const Image& d_image, const FeaturizedPointCloud& cloud,
                   const Camera& camera, const RenderConfig& config);

struct LearningRates {
  double features = 1e-2;
  double positions = 1e-4;
  double opacity = 1e-4;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  std::int64_t step = 0;
  std::vector<double> m_features, v_features;
  std::vector<double> m_positions, v_positions;  // N*3, xyz interleaved
  std::vector<double> m_opacity, v_opacity;

  static OptimState for_cloud(const FeaturizedPointCloud& cloud);
};

// One bias-corrected Adam update of every group. A learning rate of 0 leaves
// the group untouched.
void adam_step(FeaturizedPointCloud& params, const Gradients& grads, OptimState& state,
               const LearningRates& lr, const AdamConfig& adam = {});

enum class LrSchedule { Constant, OneCycle };
enum class TvNormalization { Mean, Sum };

// Multiplier applied to every group's base rate at `step` of `total_steps`.
double schedule_factor(LrSchedule schedule, std::int64_t step, std::int64_t total_steps);

struct TrainView {
  Camera camera;
  Image image;
};

struct TrainConfig {
  int steps = 2000;
  LearningRates lr;
  AdamConfig adam;
  LrSchedule schedule = LrSchedule::Constant;
  double lambda_tv = 0.01;
  TvNormalization tv_normalization = TvNormalization::Mean;
  std::uint64_t seed = 0;
  bool freeze_positions = false;
  bool freeze_opacity = false;
  bool dropout = true;   // fresh dropout mask (render.dropout_rate) every step
  int max_sh_degree = 2; // 0 keeps features view-independent
  // Called with the number of completed steps every `checkpoint_every` steps.
  int checkpoint_every = 0;
  std::function<void(int, const FeaturizedPointCloud&)> on_checkpoint;
};

struct LossRecord {
  int step = 0;
  double l1 = 0.0;
  double tv = 0.0;  // as entered into the total (normalized per tv_normalization)
  double total = 0.0;
};

struct TrainResult {
  FeaturizedPointCloud cloud;
  std::vector<LossRecord> history;
  OptimState state;
};

TrainResult train(FeaturizedPointCloud cloud, std::span<const TrainView> views,
                  const RenderConfig& render, const TrainConfig& config);

}  // namespace snp
