#include <filesystem>
#include <random>

#include "doctest.h"
#include "nrr/io.hpp"
#include "test_helpers.hpp"

using namespace nrr;
using namespace nrr::testutil;
namespace fs = std::filesystem;

namespace {

fs::path tmpFile(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "nrr_io_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("PLY cloud round trip preserves points, normals and colors") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> uni(-1, 1);
  PointCloud cloud;
  for (int i = 0; i < 257; ++i) {
    cloud.points.emplace_back(uni(rng), uni(rng), uni(rng));
    cloud.normals.push_back(randomUnit(rng));
    cloud.colors.emplace_back(Rgb(std::uint8_t(i), std::uint8_t(i * 3), std::uint8_t(255 - i)));
  }
  auto path = tmpFile("cloud.ply");
  writePlyCloud(path.string(), cloud);
  PointCloud back = readPlyCloud(path.string());
  REQUIRE(back.size() == cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    // storage is 32-bit float
    CHECK((back.points[i] - cloud.points[i]).norm() < 1e-6);
    CHECK((back.normals[i] - cloud.normals[i]).norm() < 1e-6);
    CHECK(back.colors[i] == cloud.colors[i]);
  }
}

TEST_CASE("PLY mesh round trip preserves faces exactly") {
  TriangleMesh mesh = gridMesh(7, 5, 0.013);
  auto path = tmpFile("mesh.ply");
  writePlyMesh(path.string(), mesh);
  TriangleMesh back = readPlyMesh(path.string());
  REQUIRE(back.vertices.size() == mesh.vertices.size());
  REQUIRE(back.faces.size() == mesh.faces.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i)
    CHECK((back.vertices[i] - mesh.vertices[i]).norm() < 1e-6);
  for (size_t i = 0; i < mesh.faces.size(); ++i) CHECK(back.faces[i] == mesh.faces[i]);
}

TEST_CASE("depth PNG round trip is exact at millimeter quantization") {
  RGBDFrame frame;
  frame.width = 17;
  frame.height = 9;
  frame.depth.assign(size_t(frame.width) * frame.height, 0.0);
  for (int i = 0; i < frame.width * frame.height; i += 2)
    frame.depth[i] = double(500 + i) / 1000.0;  // exact mm multiples
  auto path = tmpFile("depth.png");
  writeDepthPng(path.string(), frame);

  RGBDFrame back;
  readDepthPng(path.string(), back);
  REQUIRE(back.width == frame.width);
  REQUIRE(back.height == frame.height);
  for (size_t i = 0; i < frame.depth.size(); ++i)
    CHECK(back.depth[i] == doctest::Approx(frame.depth[i]).epsilon(1e-12));
}

TEST_CASE("color PNG round trip is exact") {
  RGBDFrame frame;
  frame.width = 11;
  frame.height = 6;
  frame.colorWidth = 11;
  frame.colorHeight = 6;
  for (int i = 0; i < 66; ++i)
    frame.color.emplace_back(Rgb(std::uint8_t(i * 4), std::uint8_t(200 - i),
                                 std::uint8_t(i)));
  auto path = tmpFile("color.png");
  writeColorPng(path.string(), frame);

  RGBDFrame back;
  readColorPng(path.string(), back);
  REQUIRE(back.colorWidth == frame.colorWidth);
  REQUIRE(back.colorHeight == frame.colorHeight);
  for (size_t i = 0; i < frame.color.size(); ++i) CHECK(back.color[i] == frame.color[i]);
}

TEST_CASE("calibration JSON round trip preserves every field") {
  CalibrationBundle calib;
  calib.depthIntrinsics = {140.0, 141.5, 80.25, 60.5, {0.1, -0.02}, 160, 120};
  calib.colorIntrinsics = {300.0, 299.0, 160.0, 120.0, {}, 320, 240};
  calib.depthToColor.rotation =
      Eigen::AngleAxisd(0.01, Vec3(0, 1, 0)).toRotationMatrix();
  calib.depthToColor.translation = Vec3(0.025, -0.001, 0.002);

  auto path = tmpFile("calib.json");
  saveCalibration(path.string(), calib);
  CalibrationBundle back = loadCalibration(path.string());

  CHECK(back.depthIntrinsics.fx == calib.depthIntrinsics.fx);
  CHECK(back.depthIntrinsics.fy == calib.depthIntrinsics.fy);
  CHECK(back.depthIntrinsics.cx == calib.depthIntrinsics.cx);
  CHECK(back.depthIntrinsics.cy == calib.depthIntrinsics.cy);
  CHECK(back.depthIntrinsics.distortion == calib.depthIntrinsics.distortion);
  CHECK(back.depthIntrinsics.width == calib.depthIntrinsics.width);
  CHECK(back.colorIntrinsics.fx == calib.colorIntrinsics.fx);
  CHECK((back.depthToColor.rotation - calib.depthToColor.rotation).norm() < 1e-12);
  CHECK((back.depthToColor.translation - calib.depthToColor.translation).norm() < 1e-12);
  CHECK(back.valid());
}

TEST_CASE("missing files throw with the path in the message") {
  CHECK_THROWS(readPlyCloud("/nonexistent/cloud.ply"));
  CHECK_THROWS(readPlyMesh("/nonexistent/mesh.ply"));
  CHECK_THROWS(loadCalibration("/nonexistent/calib.json"));
}
