#include "lpsurf/mesh_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace lpsurf {

namespace {

template <class T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

// PLY scalar types by name.
int ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw IoError("ply: unsupported type " + t);
}

double ply_read_scalar(std::istream& in, const std::string& t) {
  if (t == "char" || t == "int8") return get_le<std::int8_t>(in);
  if (t == "uchar" || t == "uint8") return get_le<std::uint8_t>(in);
  if (t == "short" || t == "int16") return get_le<std::int16_t>(in);
  if (t == "ushort" || t == "uint16") return get_le<std::uint16_t>(in);
  if (t == "int" || t == "int32") return get_le<std::int32_t>(in);
  if (t == "uint" || t == "uint32") return get_le<std::uint32_t>(in);
  if (t == "float" || t == "float32") return get_le<float>(in);
  if (t == "double" || t == "float64") return get_le<double>(in);
  throw IoError("ply: unsupported type " + t);
}

struct PlyProperty {
  std::string name;
  std::string type;
  bool is_list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

struct PlyContents {
  std::vector<Vec3> vertices;
  std::vector<Rgb> colors;
  std::vector<std::array<int, 3>> faces;
};

PlyContents read_ply_contents(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw IoError("ply: missing magic in " + path.string());
  std::vector<PlyElement> elements;
  bool binary_le = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "format") {
      std::string fmt;
      ss >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (key == "element") {
      PlyElement e;
      ss >> e.name >> e.count;
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) throw IoError("ply: property before element");
      PlyProperty p;
      std::string t;
      ss >> t;
      if (t == "list") {
        p.is_list = true;
        ss >> p.count_type >> p.type >> p.name;
      } else {
        p.type = t;
        ss >> p.name;
      }
      elements.back().properties.push_back(p);
    } else if (key == "end_header") {
      break;
    }
  }
  if (!binary_le) throw IoError("ply: only binary_little_endian is supported");

  PlyContents out;
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      bool has_color = false;
      for (const auto& p : e.properties) has_color |= p.name == "red";
      out.vertices.resize(e.count);
      if (has_color) out.colors.resize(e.count);
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.properties) {
          if (p.is_list) throw IoError("ply: list property on vertex");
          const double v = ply_read_scalar(in, p.type);
          const double scale = (p.type == "uchar" || p.type == "uint8") ? 1.0 / 255.0 : 1.0;
          if (p.name == "x") out.vertices[i].x() = v;
          else if (p.name == "y") out.vertices[i].y() = v;
          else if (p.name == "z") out.vertices[i].z() = v;
          else if (p.name == "red") out.colors[i].x() = v * scale;
          else if (p.name == "green") out.colors[i].y() = v * scale;
          else if (p.name == "blue") out.colors[i].z() = v * scale;
        }
      }
    } else if (e.name == "face") {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.properties) {
          if (!p.is_list) {
            ply_read_scalar(in, p.type);
            continue;
          }
          const auto n = static_cast<std::size_t>(ply_read_scalar(in, p.count_type));
          std::vector<int> idx(n);
          for (auto& v : idx) v = static_cast<int>(ply_read_scalar(in, p.type));
          if (p.name != "vertex_indices" && p.name != "vertex_index") continue;
          for (std::size_t k = 1; k + 1 < n; ++k) out.faces.push_back({idx[0], idx[k], idx[k + 1]});
        }
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.properties) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(ply_read_scalar(in, p.count_type));
            in.ignore(static_cast<std::streamsize>(n * ply_type_size(p.type)));
          } else {
            in.ignore(ply_type_size(p.type));
          }
        }
      }
    }
  }
  return out;
}

void write_ply_contents(const std::vector<Vec3>& vertices, const std::vector<Rgb>& colors,
                        const std::vector<std::array<int, 3>>* faces,
                        const std::filesystem::path& path) {
  auto out = open_out(path, true);
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  const bool color = !colors.empty();
  if (color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (faces != nullptr) {
    out << "element face " << faces->size() << "\n";
    out << "property list uchar int vertex_indices\n";
  }
  out << "end_header\n";
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    for (int a = 0; a < 3; ++a) put_le(out, static_cast<float>(vertices[i][a]));
    if (color) {
      for (int a = 0; a < 3; ++a)
        put_le(out, static_cast<std::uint8_t>(std::lround(std::clamp(colors[i][a], 0.0, 1.0) * 255.0)));
    }
  }
  if (faces != nullptr) {
    for (const auto& f : *faces) {
      put_le(out, static_cast<std::uint8_t>(3));
      for (int v : f) put_le(out, static_cast<std::int32_t>(v));
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

TriangleMesh read_obj(const std::filesystem::path& path) {
  auto in = open_in(path, false);
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "v") {
      Vec3 v;
      ss >> v.x() >> v.y() >> v.z();
      if (!ss) throw IoError("obj: malformed vertex in " + path.string());
      mesh.vertices.push_back(v);
    } else if (key == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(i < 0 ? static_cast<int>(mesh.vertices.size()) + i : i - 1);
      }
      if (idx.size() < 3) throw IoError("obj: face with fewer than 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  for (const auto& f : mesh.faces) {
    for (int v : f) {
      if (v < 0 || v >= static_cast<int>(mesh.vertices.size())) throw IoError("obj: face index out of range");
    }
  }
  return mesh;
}

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  auto out = open_out(path, false);
  out.precision(9);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

TriangleMesh read_ply(const std::filesystem::path& path) {
  auto c = read_ply_contents(path);
  TriangleMesh mesh;
  mesh.vertices = std::move(c.vertices);
  mesh.colors = std::move(c.colors);
  mesh.faces = std::move(c.faces);
  for (const auto& f : mesh.faces) {
    for (int v : f) {
      if (v < 0 || v >= static_cast<int>(mesh.vertices.size())) throw IoError("ply: face index out of range");
    }
  }
  return mesh;
}

void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path) {
  write_ply_contents(mesh.vertices, mesh.colors, &mesh.faces, path);
}

TriangleMesh read_mesh(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".obj" || ext == ".OBJ") return read_obj(path);
  if (ext == ".ply" || ext == ".PLY") return read_ply(path);
  throw IoError("unknown mesh extension: " + path.string());
}

void write_point_ply(const PointCloudData& cloud, const std::filesystem::path& path) {
  if (!cloud.colors.empty() && cloud.colors.size() != cloud.points.size())
    throw std::invalid_argument("point ply: color count mismatch");
  write_ply_contents(cloud.points, cloud.colors, nullptr, path);
}

PointCloudData read_point_ply(const std::filesystem::path& path) {
  auto c = read_ply_contents(path);
  return PointCloudData{std::move(c.vertices), std::move(c.colors)};
}

// ---------------------------------------------------------------------------
// PNG

void write_png(const Image& image, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (fp == nullptr) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("png: failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(image.width) * 3);
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      for (int c = 0; c < 3; ++c) {
        row[u * 3 + c] = static_cast<png_byte>(std::lround(std::clamp(image.at(u, v)[c], 0.0, 1.0) * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Image read_png(const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (fp == nullptr) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("png: failed reading " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  Image image(w, h);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (int v = 0; v < h; ++v) {
    png_read_row(png, row.data(), nullptr);
    for (int u = 0; u < w; ++u) {
      for (int c = 0; c < 3; ++c) image.at(u, v)[c] = row[u * 3 + c] / 255.0;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return image;
}

// ---------------------------------------------------------------------------
// Depth

void write_depth(const DepthMap& depth, const std::filesystem::path& path) {
  auto out = open_out(path, true);
  put_le(out, static_cast<std::uint32_t>(depth.width));
  put_le(out, static_cast<std::uint32_t>(depth.height));
  for (double d : depth.depth) {
    const float f = std::isfinite(d) ? static_cast<float>(d) : std::numeric_limits<float>::max();
    put_le(out, f);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

DepthMap read_depth(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  const auto w = get_le<std::uint32_t>(in);
  const auto h = get_le<std::uint32_t>(in);
  DepthMap depth(static_cast<int>(w), static_cast<int>(h));
  for (auto& d : depth.depth) {
    const float f = get_le<float>(in);
    d = f == std::numeric_limits<float>::max() ? std::numeric_limits<double>::infinity() : f;
  }
  return depth;
}

}  // namespace lpsurf
