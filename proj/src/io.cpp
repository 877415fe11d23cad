#include "nrr/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "json.hpp"

namespace nrr {

namespace {

void writeExact(std::ofstream& os, const void* data, size_t n) {
  os.write(reinterpret_cast<const char*>(data), std::streamsize(n));
}

struct PlyProperty {
  std::string type;
  std::string name;
};

struct PlyElement {
  std::string name;
  size_t count = 0;
  std::vector<PlyProperty> props;
  bool listFaces = false;
  std::string listCountType, listItemType;
};

size_t typeSize(const std::string& t) {
  if (t == "float" || t == "float32" || t == "int" || t == "int32" || t == "uint" ||
      t == "uint32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  if (t == "uchar" || t == "uint8" || t == "char" || t == "int8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  throw std::runtime_error("ply: unsupported type " + t);
}

double readScalar(std::ifstream& is, const std::string& t) {
  char buf[8];
  is.read(buf, std::streamsize(typeSize(t)));
  if (t == "float" || t == "float32") {
    float v;
    std::memcpy(&v, buf, 4);
    return v;
  }
  if (t == "double" || t == "float64") {
    double v;
    std::memcpy(&v, buf, 8);
    return v;
  }
  if (t == "uchar" || t == "uint8") return double(*reinterpret_cast<unsigned char*>(buf));
  if (t == "char" || t == "int8") return double(*reinterpret_cast<signed char*>(buf));
  if (t == "int" || t == "int32") {
    std::int32_t v;
    std::memcpy(&v, buf, 4);
    return v;
  }
  if (t == "uint" || t == "uint32") {
    std::uint32_t v;
    std::memcpy(&v, buf, 4);
    return v;
  }
  if (t == "short" || t == "int16") {
    std::int16_t v;
    std::memcpy(&v, buf, 2);
    return v;
  }
  std::uint16_t v;
  std::memcpy(&v, buf, 2);
  return v;
}

std::vector<PlyElement> parsePlyHeader(std::ifstream& is) {
  std::string line;
  std::getline(is, line);
  if (line.rfind("ply", 0) != 0) throw std::runtime_error("ply: bad magic");
  std::vector<PlyElement> elems;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "binary_little_endian")
        throw std::runtime_error("ply: only binary_little_endian supported");
    } else if (tok == "element") {
      PlyElement e;
      ss >> e.name >> e.count;
      elems.push_back(e);
    } else if (tok == "property") {
      std::string t;
      ss >> t;
      if (t == "list") {
        std::string ct, it, nm;
        ss >> ct >> it >> nm;
        elems.back().listFaces = true;
        elems.back().listCountType = ct;
        elems.back().listItemType = it;
      } else {
        std::string nm;
        ss >> nm;
        elems.back().props.push_back({t, nm});
      }
    } else if (tok == "end_header") {
      break;
    }
  }
  return elems;
}

}  // namespace

void writePlyCloud(const std::string& path, const PointCloud& cloud) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "ply\nformat binary_little_endian 1.0\n";
  os << "element vertex " << cloud.size() << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  os << "property float nx\nproperty float ny\nproperty float nz\n";
  os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  os << "end_header\n";
  for (size_t i = 0; i < cloud.size(); ++i) {
    float v[6] = {float(cloud.points[i].x()), float(cloud.points[i].y()),
                  float(cloud.points[i].z()), float(cloud.normals[i].x()),
                  float(cloud.normals[i].y()), float(cloud.normals[i].z())};
    writeExact(os, v, sizeof(v));
    writeExact(os, cloud.colors[i].data(), 3);
  }
}

PointCloud readPlyCloud(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  auto elems = parsePlyHeader(is);
  PointCloud cloud;
  for (const auto& e : elems) {
    if (e.name != "vertex") {
      // skip unknown fixed-size elements
      size_t rowSize = 0;
      for (const auto& p : e.props) rowSize += typeSize(p.type);
      if (e.listFaces) throw std::runtime_error("ply: unexpected list element");
      is.seekg(std::streamoff(rowSize * e.count), std::ios::cur);
      continue;
    }
    for (size_t i = 0; i < e.count; ++i) {
      Vec3 p = Vec3::Zero(), n = Vec3::Zero();
      Rgb c = Rgb::Zero();
      for (const auto& pr : e.props) {
        double v = readScalar(is, pr.type);
        if (pr.name == "x") p.x() = v;
        else if (pr.name == "y") p.y() = v;
        else if (pr.name == "z") p.z() = v;
        else if (pr.name == "nx") n.x() = v;
        else if (pr.name == "ny") n.y() = v;
        else if (pr.name == "nz") n.z() = v;
        else if (pr.name == "red") c[0] = std::uint8_t(v);
        else if (pr.name == "green") c[1] = std::uint8_t(v);
        else if (pr.name == "blue") c[2] = std::uint8_t(v);
      }
      cloud.points.push_back(p);
      cloud.normals.push_back(n);
      cloud.colors.push_back(c);
    }
  }
  return cloud;
}

void writePlyMesh(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  bool hasN = mesh.vertexNormals.size() == mesh.vertices.size();
  bool hasC = mesh.vertexColors.size() == mesh.vertices.size();
  os << "ply\nformat binary_little_endian 1.0\n";
  os << "element vertex " << mesh.vertices.size() << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  if (hasN) os << "property float nx\nproperty float ny\nproperty float nz\n";
  if (hasC) os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  os << "element face " << mesh.faces.size() << "\n";
  os << "property list uchar int vertex_indices\n";
  os << "end_header\n";
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    float v[3] = {float(mesh.vertices[i].x()), float(mesh.vertices[i].y()),
                  float(mesh.vertices[i].z())};
    writeExact(os, v, sizeof(v));
    if (hasN) {
      float n[3] = {float(mesh.vertexNormals[i].x()), float(mesh.vertexNormals[i].y()),
                    float(mesh.vertexNormals[i].z())};
      writeExact(os, n, sizeof(n));
    }
    if (hasC) writeExact(os, mesh.vertexColors[i].data(), 3);
  }
  for (const auto& f : mesh.faces) {
    std::uint8_t n = 3;
    writeExact(os, &n, 1);
    std::int32_t idx[3] = {f[0], f[1], f[2]};
    writeExact(os, idx, sizeof(idx));
  }
}

TriangleMesh readPlyMesh(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  auto elems = parsePlyHeader(is);
  TriangleMesh mesh;
  for (const auto& e : elems) {
    if (e.name == "vertex") {
      bool hasN = false, hasC = false;
      for (const auto& pr : e.props) {
        if (pr.name == "nx") hasN = true;
        if (pr.name == "red") hasC = true;
      }
      for (size_t i = 0; i < e.count; ++i) {
        Vec3 p = Vec3::Zero(), n = Vec3::Zero();
        Rgb c = Rgb::Zero();
        for (const auto& pr : e.props) {
          double v = readScalar(is, pr.type);
          if (pr.name == "x") p.x() = v;
          else if (pr.name == "y") p.y() = v;
          else if (pr.name == "z") p.z() = v;
          else if (pr.name == "nx") n.x() = v;
          else if (pr.name == "ny") n.y() = v;
          else if (pr.name == "nz") n.z() = v;
          else if (pr.name == "red") c[0] = std::uint8_t(v);
          else if (pr.name == "green") c[1] = std::uint8_t(v);
          else if (pr.name == "blue") c[2] = std::uint8_t(v);
        }
        mesh.vertices.push_back(p);
        if (hasN) mesh.vertexNormals.push_back(n);
        if (hasC) mesh.vertexColors.push_back(c);
      }
    } else if (e.name == "face") {
      for (size_t i = 0; i < e.count; ++i) {
        int n = int(readScalar(is, e.listCountType));
        std::vector<int> idx(n);
        for (int k = 0; k < n; ++k) idx[k] = int(readScalar(is, e.listItemType));
        for (int k = 2; k < n; ++k)  // fan-triangulate polygons
          mesh.faces.emplace_back(idx[0], idx[k - 1], idx[k]);
      }
    }
  }
  return mesh;
}

CalibrationBundle loadCalibration(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open calibration file " + path);
  nlohmann::json j;
  is >> j;
  auto parseK = [](const nlohmann::json& jk) {
    CameraIntrinsics k;
    k.fx = jk.at("fx");
    k.fy = jk.at("fy");
    k.cx = jk.at("cx");
    k.cy = jk.at("cy");
    k.width = jk.at("w");
    k.height = jk.at("h");
    if (jk.contains("dist")) k.distortion = jk["dist"].get<std::vector<double>>();
    return k;
  };
  CalibrationBundle c;
  c.depthIntrinsics = parseK(j.at("depth"));
  c.colorIntrinsics = parseK(j.at("color"));
  auto R = j.at("depth_to_color").at("R").get<std::vector<double>>();
  auto t = j.at("depth_to_color").at("t").get<std::vector<double>>();
  if (R.size() != 9 || t.size() != 3)
    throw std::runtime_error("calibration: depth_to_color needs R[9], t[3]");
  for (int r = 0; r < 3; ++r)
    for (int col = 0; col < 3; ++col) c.depthToColor.rotation(r, col) = R[r * 3 + col];
  c.depthToColor.translation = Vec3(t[0], t[1], t[2]);
  if (!c.valid()) throw std::runtime_error("calibration: invalid parameters in " + path);
  return c;
}

void saveCalibration(const std::string& path, const CalibrationBundle& calib) {
  auto dumpK = [](const CameraIntrinsics& k) {
    nlohmann::json j;
    j["fx"] = k.fx;
    j["fy"] = k.fy;
    j["cx"] = k.cx;
    j["cy"] = k.cy;
    j["w"] = k.width;
    j["h"] = k.height;
    j["dist"] = k.distortion;
    return j;
  };
  nlohmann::json j;
  j["depth"] = dumpK(calib.depthIntrinsics);
  j["color"] = dumpK(calib.colorIntrinsics);
  std::vector<double> R(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) R[r * 3 + c] = calib.depthToColor.rotation(r, c);
  j["depth_to_color"]["R"] = R;
  j["depth_to_color"]["t"] = std::vector<double>{calib.depthToColor.translation.x(),
                                                 calib.depthToColor.translation.y(),
                                                 calib.depthToColor.translation.z()};
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(2) << "\n";
}

void writeDepthPng(const std::string& path, const RGBDFrame& frame) {
  cv::Mat img(frame.height, frame.width, CV_16UC1);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x) {
      double mm = frame.depthAt(x, y) * 1000.0;
      img.at<std::uint16_t>(y, x) =
          std::uint16_t(std::clamp(std::lround(mm), 0l, 65535l));
    }
  if (!cv::imwrite(path, img)) throw std::runtime_error("cannot write " + path);
}

void readDepthPng(const std::string& path, RGBDFrame& frame) {
  cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (img.empty() || img.type() != CV_16UC1)
    throw std::runtime_error("cannot read 16-bit depth png " + path);
  frame.width = img.cols;
  frame.height = img.rows;
  frame.depth.resize(size_t(img.cols) * img.rows);
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x)
      frame.depthAt(x, y) = img.at<std::uint16_t>(y, x) / 1000.0;
}

void writeColorPng(const std::string& path, const RGBDFrame& frame) {
  int w = frame.colorWidth > 0 ? frame.colorWidth : frame.width;
  int h = frame.colorHeight > 0 ? frame.colorHeight : frame.height;
  cv::Mat img(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Rgb& c = frame.color[size_t(y) * w + x];
      img.at<cv::Vec3b>(y, x) = cv::Vec3b(c[2], c[1], c[0]);  // BGR on disk
    }
  if (!cv::imwrite(path, img)) throw std::runtime_error("cannot write " + path);
}

void readColorPng(const std::string& path, RGBDFrame& frame) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) throw std::runtime_error("cannot read color png " + path);
  frame.colorWidth = img.cols;
  frame.colorHeight = img.rows;
  frame.color.resize(size_t(img.cols) * img.rows);
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x) {
      cv::Vec3b c = img.at<cv::Vec3b>(y, x);
      frame.color[size_t(y) * img.cols + x] = Rgb(c[2], c[1], c[0]);
    }
}

}  // namespace nrr
