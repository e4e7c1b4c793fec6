#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

namespace satvl {

/// Grayscale raster with intensities in [0, 1], row-major.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<double> gray;

  double at(int x, int y) const { return gray[static_cast<std::size_t>(y) * width + x]; }
};

/// Decodes PNG (8/16-bit, any color type) and binary PGM/PPM (P5/P6).
/// Color is reduced to luma 0.299 R + 0.587 G + 0.114 B.
Raster load_raster(const std::filesystem::path& path);

/// Mean intensity over a grid x grid partition, row-major.
Eigen::VectorXd patch_means(const Raster& raster, int grid);

}  // namespace satvl
