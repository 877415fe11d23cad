#include "nrr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"

#include "nrr/correspond.hpp"
#include "nrr/io.hpp"
#include "nrr/spatial.hpp"

namespace nrr {

namespace {

// trunk semi-axes (x width, y height, z depth towards the camera start)
constexpr double kAxisX = 0.17;
constexpr double kAxisY = 0.25;
constexpr double kAxisZ = 0.10;
constexpr double kExpVertical = 1.2;   // blend exponent along y
constexpr double kExpSection = 1.0;    // cross-section exponent
constexpr double kCapRadius = 0.06;
const Vec3 kCapCenterR(0.065, 0.05, 0.075);
const Vec3 kCapCenterL(-0.065, 0.05, 0.075);
constexpr double kDotRadius = 0.005;

// inside-outside function of the trunk; homogeneous of degree 2/e1 in scale
double trunkInsideOutside(const Vec3& p) {
  double section = std::pow(std::abs(p.x() / kAxisX), 2.0 / kExpSection) +
                   std::pow(std::abs(p.z() / kAxisZ), 2.0 / kExpSection);
  return std::pow(section, kExpSection / kExpVertical) +
         std::pow(std::abs(p.y() / kAxisY), 2.0 / kExpVertical);
}

double trunkRadial(const Vec3& dir) {
  double f = trunkInsideOutside(dir);
  return std::pow(f, -kExpVertical / 2.0);
}

// far intersection of the origin ray with a sphere, 0 when the ray misses
double sphereRadial(const Vec3& dir, const Vec3& center, double r) {
  double b = dir.dot(center);
  double disc = b * b - center.squaredNorm() + r * r;
  if (disc < 0 || b <= 0) return 0;
  return b + std::sqrt(disc);
}

}  // namespace

SyntheticScene::SyntheticScene(const SynthParams& p) : params(p) {
  std::mt19937 rng(p.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_real_distribution<double> uni01(0.0, 1.0);

  int n = std::clamp(p.warpComponents, 0, 5);
  double totalAmp = p.warpMm * 1e-3;
  // geometric amplitude profile summing to the peak displacement: the leading
  // component is the large, smooth sway/breathing term, the tail adds detail
  double ampSum = 0;
  for (int k = 0; k < n; ++k) ampSum += std::pow(0.4, k);
  warpBasis.clear();
  for (int k = 0; k < n; ++k) {
    WarpComponent c;
    c.direction = Vec3(uni(rng), uni(rng), uni(rng));
    if (c.direction.norm() < 1e-6) c.direction = Vec3(0, 0, 1);
    c.direction.normalize();
    // spatial wavelength shrinks down the profile: >= ~0.9 m for the leading
    // component, >= ~0.2 m for the last
    c.spatialFreq = Vec3(uni(rng), uni(rng), uni(rng)) * (3.0 + 3.0 * k) * p.warpFreqScale;
    c.phase = uni01(rng) * 2 * M_PI;
    c.timeFreq = 0.04 + 0.08 * uni01(rng);
    c.amplitude = totalAmp * std::pow(0.4, k) / (ampSum > 0 ? ampSum : 1.0);
    warpBasis.push_back(c);
  }

  landmarkDirections.clear();
  for (int k = 0; k < p.landmarkCount; ++k) {
    double u = p.landmarkCount > 1 ? double(k) / (p.landmarkCount - 1) : 0.5;
    double yaw = -0.8 + 1.6 * u;
    double pitch = 0.55 * std::sin(2.4 * M_PI * u + 0.7);
    landmarkDirections.push_back(Vec3(std::sin(yaw) * std::cos(pitch), std::sin(pitch),
                                      std::cos(yaw) * std::cos(pitch)));
  }
}

CalibrationBundle SyntheticScene::calibration() const {
  CalibrationBundle c;
  c.depthIntrinsics.fx = c.depthIntrinsics.fy = params.focal;
  c.depthIntrinsics.cx = (params.width - 1) / 2.0;
  c.depthIntrinsics.cy = (params.height - 1) / 2.0;
  c.depthIntrinsics.width = params.width;
  c.depthIntrinsics.height = params.height;
  c.depthIntrinsics.distortion = {0, 0, 0, 0, 0};
  c.colorIntrinsics = c.depthIntrinsics;
  c.depthToColor = RigidTransform{};
  return c;
}

RigidTransform SyntheticScene::cameraPose(int frame) const {
  double span = params.sweepDegrees * M_PI / 180.0;
  double t = params.frames > 1 ? double(frame) / (params.frames - 1) : 0.5;
  double theta = -span / 2 + span * t;
  Vec3 pos(params.cameraDistance * std::sin(theta), 0,
           params.cameraDistance * std::cos(theta));
  Vec3 zc = (-pos).normalized();  // look at the origin
  Vec3 xc = Vec3(0, -1, 0).cross(zc).normalized();
  Vec3 yc = zc.cross(xc);
  RigidTransform pose;
  pose.rotation.col(0) = xc;
  pose.rotation.col(1) = yc;
  pose.rotation.col(2) = zc;
  pose.translation = pos;
  return pose;
}

double SyntheticScene::radius(const Vec3& dirIn) const {
  Vec3 dir = dirIn.normalized();
  double r = trunkRadial(dir);
  r = std::max(r, sphereRadial(dir, kCapCenterR, kCapRadius));
  r = std::max(r, sphereRadial(dir, kCapCenterL, kCapRadius));
  return r;
}

double SyntheticScene::signedValue(const Vec3& p) const {
  double len = p.norm();
  if (len < 1e-9) return -radius(Vec3(0, 0, 1));
  return len - radius(p / len);
}

Vec3 SyntheticScene::warpDisplacement(const Vec3& p, double t) const {
  Vec3 d = Vec3::Zero();
  for (const auto& c : warpBasis)
    d += c.amplitude * std::sin(c.spatialFreq.dot(p) + c.phase + c.timeFreq * t) *
         c.direction;
  return d;
}

Vec3 SyntheticScene::unwarpPoint(const Vec3& q, double t) const {
  Vec3 p = q;
  for (int i = 0; i < 25; ++i) {
    Vec3 next = q - warpDisplacement(p, t);
    if ((next - p).norm() < 1e-12) return next;
    p = next;
  }
  return p;
}

Vec3 SyntheticScene::landmarkCanonical(int k) const {
  return surfacePoint(landmarkDirections[k]);
}

Vec3 SyntheticScene::landmarkAt(int k, double t) const {
  return warpPoint(landmarkCanonical(k), t);
}

namespace {

Rgb skinColor(const SyntheticScene& scene, const Vec3& canonical) {
  for (const Vec3& dir : scene.landmarkDirections) {
    if ((canonical - scene.surfacePoint(dir)).norm() < kDotRadius)
      return Rgb(30, 30, 120);
  }
  double m = 0.92 + 0.08 * std::sin(55.0 * canonical.x()) *
                        std::sin(47.0 * canonical.y() + 1.3) *
                        std::sin(40.0 * canonical.z() + 0.4);
  auto to8 = [&](double base) {
    return std::uint8_t(std::clamp(std::lround(base * m), 0L, 255L));
  };
  return Rgb(to8(228), to8(178), to8(148));
}

}  // namespace

RenderedFrame renderFrame(const SyntheticScene& scene, int frameIndex) {
  const SynthParams& p = scene.params;
  const double t = scene.frameTime(frameIndex);
  RenderedFrame out;
  out.pose = scene.cameraPose(frameIndex);
  RGBDFrame& f = out.frame;
  f.width = p.width;
  f.height = p.height;
  f.colorWidth = p.width;
  f.colorHeight = p.height;
  f.timestamp = t;
  f.depth.assign(size_t(p.width) * p.height, 0);
  f.color.assign(size_t(p.width) * p.height, Rgb::Zero());
  out.trueDepth.assign(size_t(p.width) * p.height, 0);

  const double cx = (p.width - 1) / 2.0, cy = (p.height - 1) / 2.0;
  const Mat3& R = out.pose.rotation;
  const Vec3& camPos = out.pose.translation;

#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      Vec3 rayCam((x - cx) / p.focal, (y - cy) / p.focal, 1.0);
      Vec3 rayWorld = R * rayCam;  // world offset per unit z-depth
      auto g = [&](double z) {
        return scene.signedValue(scene.unwarpPoint(camPos + z * rayWorld, t));
      };
      double zHit = 0;
      double zPrev = p.cameraDistance - 0.45;
      double gPrev = g(zPrev);
      const double zEnd = p.cameraDistance + 0.45;
      for (double z = zPrev + 0.004; z <= zEnd; z += 0.004) {
        double gz = g(z);
        if (gPrev > 0 && gz <= 0) {
          double lo = z - 0.004, hi = z;
          for (int it = 0; it < 40; ++it) {
            double mid = 0.5 * (lo + hi);
            (g(mid) > 0 ? lo : hi) = mid;
          }
          zHit = 0.5 * (lo + hi);
          break;
        }
        gPrev = gz;
      }
      size_t idx = size_t(y) * p.width + x;
      if (zHit > 0) {
        out.trueDepth[idx] = zHit;
        Vec3 canonical = scene.unwarpPoint(camPos + zHit * rayWorld, t);
        f.color[idx] = skinColor(scene, canonical);
      } else {
        out.trueDepth[idx] = p.wallDepth;
        f.color[idx] = Rgb(90, 90, 95);
      }
    }
  }

  // deterministic per-frame noise stream, independent of thread count
  std::mt19937 rng(p.seed * 1000003u + std::uint32_t(frameIndex) * 7919u + 17u);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double z0 = p.cameraDistance;
  for (size_t idx = 0; idx < out.trueDepth.size(); ++idx) {
    double z = out.trueDepth[idx];
    if (p.noiseSigma > 0) z += gauss(rng) * p.noiseSigma * (z * z) / (z0 * z0);
    z = std::round(z * 1000.0) / 1000.0;  // 1 mm quantization
    f.depth[idx] = std::max(0.0, z);
  }
  f.registeredColor = f.color;  // identity depth-to-color mapping
  return out;
}

TriangleMesh referenceSurfaceMesh(const SyntheticScene& scene, double t,
                                  int resolution) {
  TriangleMesh mesh;
  const int nu = resolution, nv = resolution;  // azimuth x polar
  const double polarMargin = 0.04;
  mesh.vertices.resize(size_t(nu) * nv);
#pragma omp parallel for
  for (int v = 0; v < nv; ++v) {
    double phi = polarMargin + (M_PI - 2 * polarMargin) * v / (nv - 1);
    for (int u = 0; u < nu; ++u) {
      double theta = 2 * M_PI * u / nu;
      Vec3 dir(std::sin(phi) * std::cos(theta), std::cos(phi),
               std::sin(phi) * std::sin(theta));
      mesh.vertices[size_t(v) * nu + u] = scene.warpPoint(scene.surfacePoint(dir), t);
    }
  }
  for (int v = 0; v + 1 < nv; ++v)
    for (int u = 0; u < nu; ++u) {
      int un = (u + 1) % nu;
      int a = v * nu + u, b = v * nu + un;
      int c = (v + 1) * nu + u, d = (v + 1) * nu + un;
      mesh.faces.emplace_back(a, b, d);
      mesh.faces.emplace_back(a, d, c);
    }
  return mesh;
}

GroundTruthError groundTruthError(const PointCloud& model, const SyntheticScene& scene,
                                  double tRef, int resolution) {
  if (model.empty()) throw std::runtime_error("groundTruthError: empty model");
  TriangleMesh ref = referenceSurfaceMesh(scene, tRef, resolution);
  // the pipeline anchors pose 0 to the identity, so models live in the first
  // camera's frame; bring the reference surface into that frame
  RigidTransform toAnchor = invertTransform(scene.cameraPose(0));
  for (auto& v : ref.vertices) v = toAnchor.apply(v);
  TriangleBvh bvh(ref);
  std::vector<double> dist(model.size(), 0);
#pragma omp parallel for schedule(dynamic, 256)
  for (long i = 0; i < long(model.size()); ++i) {
    dist[i] = bvh.nearest(model.points[i]).distance;
  }
  GroundTruthError e;
  double sum = 0;
  for (double d : dist) {
    sum += d * d;
    e.hausdorff = std::max(e.hausdorff, d);
  }
  e.rms = std::sqrt(sum / double(model.size()));
  return e;
}

std::vector<LandmarkObservations> landmarkObservations(
    const SyntheticScene& scene, const std::vector<RenderedFrame>& frames) {
  const SynthParams& p = scene.params;
  CalibrationBundle calib = scene.calibration();
  std::vector<LandmarkObservations> out(scene.landmarkDirections.size());
  for (size_t k = 0; k < scene.landmarkDirections.size(); ++k)
    out[k].landmarkId = int(k);

  // canonical surface normals by numeric gradient of the radial level set
  std::vector<Vec3> landmarkNormals;
  for (size_t k = 0; k < scene.landmarkDirections.size(); ++k) {
    Vec3 lp = scene.landmarkCanonical(int(k));
    const double h = 1e-5;
    Vec3 grad;
    for (int a = 0; a < 3; ++a) {
      Vec3 dp = Vec3::Zero();
      dp[a] = h;
      grad[a] = (scene.signedValue(lp + dp) - scene.signedValue(lp - dp)) / (2 * h);
    }
    landmarkNormals.push_back(grad.normalized());
  }

  for (size_t fi = 0; fi < frames.size(); ++fi) {
    const RenderedFrame& rf = frames[fi];
    RigidTransform toCam = invertTransform(rf.pose);
    double t = scene.frameTime(int(fi));
    for (size_t k = 0; k < scene.landmarkDirections.size(); ++k) {
      Vec3 world = scene.landmarkAt(int(k), t);
      Vec3 cam = toCam.apply(world);
      if (cam.z() <= 0.1) continue;
      // only well-observed samples: the surface must clearly face the camera
      Vec3 toCamera = (rf.pose.translation - world).normalized();
      if (landmarkNormals[k].dot(toCamera) < 0.5) continue;
      Eigen::Vector2d px = projectPoint(cam, calib.depthIntrinsics);
      int xi = int(std::lround(px.x())), yi = int(std::lround(px.y()));
      if (xi < 1 || yi < 1 || xi + 1 >= p.width || yi + 1 >= p.height) continue;
      double zSeen = rf.trueDepth[size_t(yi) * p.width + xi];
      if (zSeen <= 0 || std::abs(zSeen - cam.z()) > 0.015) continue;  // occluded
      bool coherent = true;  // reject silhouette-adjacent pixels
      for (int dy = -1; dy <= 1 && coherent; ++dy)
        for (int dx = -1; dx <= 1 && coherent; ++dx) {
          double z = rf.trueDepth[size_t(yi + dy) * p.width + (xi + dx)];
          if (z <= 0 || std::abs(z - cam.z()) > 0.05) coherent = false;
        }
      if (!coherent) continue;
      out[k].samples.push_back({int(fi), px});
    }
  }
  out.erase(std::remove_if(out.begin(), out.end(),
                           [](const LandmarkObservations& o) { return o.samples.empty(); }),
            out.end());
  return out;
}

void writeSequence(const SyntheticScene& scene, const std::string& outDir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(outDir) / "depth");
  fs::create_directories(fs::path(outDir) / "color");

  std::vector<RenderedFrame> frames;
  PoseSequence poses;
  for (int i = 0; i < scene.params.frames; ++i) {
    frames.push_back(renderFrame(scene, i));
    char stem[16];
    std::snprintf(stem, sizeof(stem), "%04d", i);
    writeDepthPng((fs::path(outDir) / "depth" / (std::string(stem) + ".png")).string(),
                  frames.back().frame);
    writeColorPng((fs::path(outDir) / "color" / (std::string(stem) + ".png")).string(),
                  frames.back().frame);
    poses.poses.push_back(frames.back().pose);
    poses.frameIds.push_back(stem);
  }
  savePoses((fs::path(outDir) / "poses.txt").string(), poses);
  saveCalibration((fs::path(outDir) / "calibration.json").string(), scene.calibration());
  saveLandmarksCsv((fs::path(outDir) / "landmarks.csv").string(),
                   landmarkObservations(scene, frames));

  nlohmann::json gt;
  gt["frames"] = scene.params.frames;
  gt["warp_mm"] = scene.params.warpMm;
  gt["seed"] = scene.params.seed;
  gt["noise_sigma"] = scene.params.noiseSigma;
  gt["width"] = scene.params.width;
  gt["height"] = scene.params.height;
  gt["focal"] = scene.params.focal;
  gt["camera_distance"] = scene.params.cameraDistance;
  gt["wall_depth"] = scene.params.wallDepth;
  gt["sweep_degrees"] = scene.params.sweepDegrees;
  gt["landmark_count"] = scene.params.landmarkCount;
  gt["warp_components"] = scene.params.warpComponents;
  gt["warp_freq_scale"] = scene.params.warpFreqScale;
  std::ofstream out(fs::path(outDir) / "ground_truth.json");
  out << gt.dump(2) << "\n";
}

SynthParams loadSceneSidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("loadSceneSidecar: cannot open " + path);
  nlohmann::json gt = nlohmann::json::parse(in);
  SynthParams p;
  p.frames = gt.at("frames").get<int>();
  p.warpMm = gt.at("warp_mm").get<double>();
  p.seed = gt.at("seed").get<std::uint32_t>();
  p.noiseSigma = gt.at("noise_sigma").get<double>();
  p.width = gt.at("width").get<int>();
  p.height = gt.at("height").get<int>();
  p.focal = gt.at("focal").get<double>();
  p.cameraDistance = gt.at("camera_distance").get<double>();
  p.wallDepth = gt.at("wall_depth").get<double>();
  p.sweepDegrees = gt.at("sweep_degrees").get<double>();
  p.landmarkCount = gt.at("landmark_count").get<int>();
  p.warpComponents = gt.at("warp_components").get<int>();
  p.warpFreqScale = gt.value("warp_freq_scale", 1.0);
  return p;
}

}  // namespace nrr
