#include "satvl/raster.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "satvl/common.hpp"

namespace satvl {
namespace {

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

Raster load_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error("cannot decode PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error("cannot decode PNG " + path.string() + ": " + image.message);
  }
  Raster r;
  r.width = static_cast<int>(image.width);
  r.height = static_cast<int>(image.height);
  r.gray.reserve(buffer.size());
  for (auto b : buffer) r.gray.push_back(static_cast<double>(b) / 255.0);
  return r;
}

Raster load_netpbm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::istringstream in(bytes);
  std::string magic;
  in >> magic;
  auto next_int = [&] {
    int v = 0;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    if (!(in >> v)) throw Error("malformed netpbm header in " + path.string());
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw Error("unsupported netpbm dimensions in " + path.string());
  }
  in.get();
  const int channels = magic == "P6" ? 3 : 1;
  const auto offset = static_cast<std::size_t>(in.tellg());
  const auto needed = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() < offset + needed) throw Error("truncated netpbm data in " + path.string());
  Raster r;
  r.width = w;
  r.height = h;
  r.gray.resize(static_cast<std::size_t>(w) * h);
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  for (std::size_t i = 0; i < r.gray.size(); ++i) {
    if (channels == 1) {
      r.gray[i] = px[i] / static_cast<double>(maxval);
    } else {
      r.gray[i] = luma(px[3 * i], px[3 * i + 1], px[3 * i + 2]) / maxval;
    }
  }
  return r;
}

}  // namespace

Raster load_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open raster " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) return load_netpbm(path);
  return load_png(path);
}

Eigen::VectorXd patch_means(const Raster& raster, int grid) {
  if (grid < 1 || raster.width < grid || raster.height < grid) {
    throw std::invalid_argument("raster smaller than the patch grid");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(grid * grid);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(grid * grid);
  for (int y = 0; y < raster.height; ++y) {
    const int py = y * grid / raster.height;
    for (int x = 0; x < raster.width; ++x) {
      const int px = x * grid / raster.width;
      out[py * grid + px] += raster.at(x, y);
      counts[py * grid + px] += 1.0;
    }
  }
  return out.cwiseQuotient(counts);
}

}  // namespace satvl
