#include "nrr/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace nrr {

namespace {

double radialFactor(const std::vector<double>& dist, double r2) {
  double f = 1.0, rp = r2;
  for (double k : dist) {
    f += k * rp;
    rp *= r2;
  }
  return f;
}

}  // namespace

Eigen::Vector2d distortPixel(const Eigen::Vector2d& p, const CameraIntrinsics& k) {
  double xn = (p.x() - k.cx) / k.fx;
  double yn = (p.y() - k.cy) / k.fy;
  double f = radialFactor(k.distortion, xn * xn + yn * yn);
  return {k.cx + k.fx * xn * f, k.cy + k.fy * yn * f};
}

std::optional<Eigen::Vector2d> undistortPixel(const Eigen::Vector2d& p,
                                              const CameraIntrinsics& k) {
  if (k.distortion.empty()) return p;
  double xd = (p.x() - k.cx) / k.fx;
  double yd = (p.y() - k.cy) / k.fy;
  double xu = xd, yu = yd;
  const double tol = 1e-6 / std::max(k.fx, k.fy);  // 1e-6 px in normalized units
  for (int it = 0; it < 50; ++it) {
    double f = radialFactor(k.distortion, xu * xu + yu * yu);
    double nx = xd / f, ny = yd / f;
    double change = std::hypot(nx - xu, ny - yu);
    xu = nx;
    yu = ny;
    if (change < tol) {
      // verify the forward model round trip
      Eigen::Vector2d u(k.cx + k.fx * xu, k.cy + k.fy * yu);
      if ((distortPixel(u, k) - p).norm() < 1e-6) return u;
    }
  }
  return std::nullopt;
}

Eigen::Vector2d projectPoint(const Vec3& p, const CameraIntrinsics& k) {
  double xn = p.x() / p.z();
  double yn = p.y() / p.z();
  double f = radialFactor(k.distortion, xn * xn + yn * yn);
  return {k.cx + k.fx * xn * f, k.cy + k.fy * yn * f};
}

std::vector<std::uint8_t> computeForegroundMask(RGBDFrame& frame, double margin) {
  const int w = frame.width, h = frame.height;
  std::vector<std::uint8_t> mask(size_t(w) * h, 0);

  // background depth = median of the 9x9 right top corner patch
  std::vector<double> patch;
  for (int y = 0; y < std::min(9, h); ++y)
    for (int x = std::max(0, w - 9); x < w; ++x)
      if (frame.validDepth(x, y)) patch.push_back(frame.depthAt(x, y));

  double background;
  if (!patch.empty()) {
    std::nth_element(patch.begin(), patch.begin() + patch.size() / 2, patch.end());
    background = patch[patch.size() / 2];
  } else {
    // corner fully invalid: Otsu split over the valid depth histogram
    std::fprintf(stderr,
                 "[preprocess] warning: corner patch has no valid depth, "
                 "falling back to histogram split\n");
    std::vector<double> depths;
    for (double d : frame.depth)
      if (d > 0) depths.push_back(d);
    if (depths.empty()) {
      frame.foreground = mask;
      return mask;
    }
    auto [mnIt, mxIt] = std::minmax_element(depths.begin(), depths.end());
    double mn = *mnIt, mx = *mxIt;
    const int bins = 64;
    std::vector<int> hist(bins, 0);
    for (double d : depths) {
      int b = std::min(bins - 1, int((d - mn) / std::max(1e-12, mx - mn) * bins));
      hist[b]++;
    }
    // Otsu threshold maximizing between-class variance
    double total = depths.size(), sum = 0;
    for (int b = 0; b < bins; ++b) sum += b * hist[b];
    double sumB = 0, wB = 0, best = -1;
    int bestBin = bins / 2;
    for (int b = 0; b < bins; ++b) {
      wB += hist[b];
      if (wB == 0) continue;
      double wF = total - wB;
      if (wF == 0) break;
      sumB += b * hist[b];
      double mB = sumB / wB, mF = (sum - sumB) / wF;
      double between = wB * wF * (mB - mF) * (mB - mF);
      if (between > best) {
        best = between;
        bestBin = b;
      }
    }
    background = mn + (bestBin + 1.0) / bins * (mx - mn) + margin;
  }

  double threshold = background - margin;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double d = frame.depthAt(x, y);
      if (d > 0 && d < threshold) mask[size_t(y) * w + x] = 1;
    }

  // 3 binary erosions with a 3x3 all-ones structuring element
  std::vector<std::uint8_t> tmp(mask.size());
  for (int pass = 0; pass < 3; ++pass) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::uint8_t keep = 1;
        for (int dy = -1; dy <= 1 && keep; ++dy)
          for (int dx = -1; dx <= 1 && keep; ++dx) {
            int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h || !mask[size_t(ny) * w + nx])
              keep = 0;
          }
        tmp[size_t(y) * w + x] = keep;
      }
    mask.swap(tmp);
  }
  frame.foreground = mask;
  return mask;
}

DepthGrid backprojectGrid(const RGBDFrame& frame, const CameraIntrinsics& k) {
  const int w = frame.width, h = frame.height;
  DepthGrid grid;
  grid.position.assign(size_t(w) * h, Vec3::Zero());
  grid.valid.assign(size_t(w) * h, 0);
#pragma omp parallel for
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double d = frame.depthAt(x, y);
      if (d <= 0) continue;
      auto u = undistortPixel(Eigen::Vector2d(x, y), k);
      if (!u) continue;
      size_t i = size_t(y) * w + x;
      grid.position[i] = Vec3((u->x() - k.cx) / k.fx * d, (u->y() - k.cy) / k.fy * d, d);
      grid.valid[i] = 1;
    }
  }
  return grid;
}

std::optional<Vec3> windowNormal(const DepthGrid& grid, int width, int height, int x,
                                 int y) {
  Vec3 mean = Vec3::Zero();
  int count = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      int nx = x + dx, ny = y + dy;
      if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
      size_t i = size_t(ny) * width + nx;
      if (!grid.valid[i]) continue;
      mean += grid.position[i];
      ++count;
    }
  if (count < 3) return std::nullopt;
  mean /= count;
  Mat3 cov = Mat3::Zero();
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      int nx = x + dx, ny = y + dy;
      if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
      size_t i = size_t(ny) * width + nx;
      if (!grid.valid[i]) continue;
      Vec3 d = grid.position[i] - mean;
      cov += d * d.transpose();
    }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  Vec3 n = eig.eigenvectors().col(0);  // smallest eigenvalue
  if (n.norm() < 1e-12) return std::nullopt;
  n.normalize();
  const Vec3& p = grid.position[size_t(y) * width + x];
  if (p.dot(n) > 0) n = -n;  // flip towards the camera origin
  return n;
}

FrameCloud backproject(RGBDFrame& frame, const CalibrationBundle& calib) {
  if (!calib.valid()) throw std::runtime_error("backproject: invalid calibration");
  const int w = frame.width, h = frame.height;
  if (frame.foreground.empty()) computeForegroundMask(frame);
  DepthGrid grid = backprojectGrid(frame, calib.depthIntrinsics);

  frame.registeredColor.assign(size_t(w) * h, Rgb::Zero());

  // per-pixel emission decision, parallel; compaction is serial for
  // deterministic ordering
  struct PixelOut {
    std::uint8_t emit = 0;
    Vec3 normal;
    Rgb color;
  };
  std::vector<PixelOut> out(size_t(w) * h);
#pragma omp parallel for
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      size_t i = size_t(y) * w + x;
      if (!grid.valid[i] || !frame.foreground[i]) continue;
      double d = grid.position[i].z();
      if (d < kDepthMin || d > kDepthMax) continue;
      // color lookup through the extrinsics, nearest integer, bounds checked
      Vec3 pc = calib.depthToColor.apply(grid.position[i]);
      if (pc.z() <= 0) continue;
      Eigen::Vector2d px = projectPoint(pc, calib.colorIntrinsics);
      int cx = int(std::lround(px.x()));
      int cy = int(std::lround(px.y()));
      int cw = frame.colorWidth > 0 ? frame.colorWidth : w;
      int ch = frame.colorHeight > 0 ? frame.colorHeight : h;
      if (cx < 0 || cy < 0 || cx >= cw || cy >= ch) continue;
      auto n = windowNormal(grid, w, h, x, y);
      if (!n) continue;
      out[i].emit = 1;
      out[i].normal = *n;
      out[i].color = frame.color.empty() ? Rgb::Zero() : frame.color[size_t(cy) * cw + cx];
    }
  }

  FrameCloud fc;
  for (size_t i = 0; i < out.size(); ++i) {
    if (!out[i].emit) continue;
    frame.registeredColor[i] = out[i].color;
    fc.cloud.points.push_back(grid.position[i]);
    fc.cloud.normals.push_back(out[i].normal);
    fc.cloud.colors.push_back(out[i].color);
    fc.pixelIndex.push_back(int(i));
  }
  return fc;
}

}  // namespace nrr
