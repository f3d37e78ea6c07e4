#pragma once

#include "snp/pointcloud.hpp"

#include <filesystem>
#include <vector>

namespace snp {

struct PlyReadOptions {
  // Used when the file carries no "comment snp ..." lines (e.g. xyz-only PLY
  // written by another tool).
  int default_feature_dim = 27;
  double default_radius = 0.01;
  double default_opacity_logit = kInitialOpacityLogit;
};

// Binary little-endian PLY; vertex properties x, y, z, opacity_logit,
// f_0 .. f_{K-1} as float32, K and radius recorded in comment lines.
void write_ply(const std::filesystem::path& path, const FeaturizedPointCloud& cloud);
FeaturizedPointCloud read_ply(const std::filesystem::path& path, const PlyReadOptions& opts = {});

// In-memory variants used by the file functions (and by tests).
std::vector<char> encode_ply(const FeaturizedPointCloud& cloud);
FeaturizedPointCloud decode_ply(const std::vector<char>& bytes, const PlyReadOptions& opts = {});

// Depth map as PFM ("Pf") plus a sidecar "<stem>.json" holding camera index
// and scale; invalid pixels are stored as 0.
void write_depth_map(const std::filesystem::path& pfm_path, const DepthMap& map);
DepthMap read_depth_map(const std::filesystem::path& pfm_path, const std::vector<Camera>& cameras);

// All "*.pfm" depth maps in a directory, sorted by file name.
std::vector<DepthMap> read_depth_dir(const std::filesystem::path& dir,
                                     const std::vector<Camera>& cameras);

}  // namespace snp
