#ifndef NRR_IO_HPP
#define NRR_IO_HPP

#include <string>

#include "nrr/core.hpp"
#include "nrr/preprocess.hpp"

namespace nrr {

// PLY, binary little-endian. Points carry x y z nx ny nz red green blue.
void writePlyCloud(const std::string& path, const PointCloud& cloud);
PointCloud readPlyCloud(const std::string& path);

void writePlyMesh(const std::string& path, const TriangleMesh& mesh);
TriangleMesh readPlyMesh(const std::string& path);

// Calibration JSON:
// {depth:{fx,fy,cx,cy,dist[],w,h}, color:{...}, depth_to_color:{R[9] row-major, t[3]}}
CalibrationBundle loadCalibration(const std::string& path);
void saveCalibration(const std::string& path, const CalibrationBundle& calib);

// 16-bit grayscale PNG, millimeters, 0 = invalid.
void writeDepthPng(const std::string& path, const RGBDFrame& frame);
void readDepthPng(const std::string& path, RGBDFrame& frame);

// 8-bit RGB PNG (raw color image).
void writeColorPng(const std::string& path, const RGBDFrame& frame);
void readColorPng(const std::string& path, RGBDFrame& frame);

}  // namespace nrr

#endif
