#ifndef NRR_FUSE_HPP
#define NRR_FUSE_HPP

#include <optional>
#include <string>

#include "nrr/core.hpp"

namespace nrr {

struct FusedModel {
  PointCloud points;
  std::optional<TriangleMesh> mesh;
};

struct MlsStats {
  size_t planeFallback = 0;  // neighborhoods too small for the requested order
  size_t passthrough = 0;    // neighborhoods too small even for a plane
};

/// Moving-least-squares projection: each point is projected onto a
/// polynomial of the given degree fitted over its radius neighborhood in the
/// local PCA plane frame, Gaussian-weighted at scale radius/2. Normals are
/// recomputed from the fitted surface.
PointCloud mlsSmooth(const PointCloud& cloud, double radius, int order = 2,
                     MlsStats* stats = nullptr);

/// Flip normals to face their originating camera center. An empty center list
/// falls back to consistency propagation over a neighbor graph, with a
/// warning.
PointCloud reorientNormals(const PointCloud& cloud,
                           const std::vector<Vec3>& cameraCenters);

/// Voxel-centroid reduction to a uniform density.
PointCloud gridResample(const PointCloud& cloud, double cellSize);

struct MeshParams {
  std::string mesherCommand = "hull_mesher";  // mesher --in a.ply --out b.ply ...
  int depth = 9;
  int samplesPerNode = 10;
  double clipBand = 0.005;  // drop faces farther than this from the input points
  std::string workDir = "";  // temp files live here; empty = system temp
};

/// Mesh the point set through the external mesher subprocess contract
/// (`mesher --in points.ply --out mesh.ply --depth D --samples-per-node S`),
/// then clip excess surface beyond the distance band. Returns nullopt when
/// the mesher is unavailable or fails; throws on an empty cloud.
std::optional<TriangleMesh> meshModel(const PointCloud& points, const MeshParams& params);

/// Remove faces whose vertices stray beyond `band` meters from the cloud;
/// unused vertices are dropped and indices compacted.
TriangleMesh clipToBand(const TriangleMesh& mesh, const PointCloud& points, double band);

/// Vertex colors from a radial neighborhood: hue averaged by sequential
/// circular shortest-arc accumulation, saturation and value arithmetically;
/// the radius doubles up to 4 times for isolated vertices, after which the
/// vertex stays uncolored.
TriangleMesh reintegrateColor(const TriangleMesh& mesh, const PointCloud& points,
                              double radius,
                              std::vector<std::uint8_t>* coloredMask = nullptr);

// HSV helpers (h in degrees [0,360), s,v in [0,1])
void rgbToHsv(const Rgb& rgb, double& h, double& s, double& v);
Rgb hsvToRgb(double h, double s, double v);

}  // namespace nrr

#endif
