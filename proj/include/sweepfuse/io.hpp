#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sweepfuse/errors.hpp"
#include "sweepfuse/features.hpp"
#include "sweepfuse/geometry.hpp"
#include "sweepfuse/maps.hpp"
#include "sweepfuse/pointcloud.hpp"
#include "sweepfuse/regularizer.hpp"

namespace sweepfuse {

namespace fs = std::filesystem;

using WarningSink = std::function<void(const std::string&)>;

inline void default_warning(const std::string& msg) {
  std::cerr << "warning: " << msg << '\n';
}

namespace detail {

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline void append_f32_le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

inline float read_f32_le(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | static_cast<std::uint8_t>(p[i]);
  return std::bit_cast<float>(bits);
}

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_double(const std::string& token, int line) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("expected a number, got '" + token + "'", line);
  }
  return v;
}

inline long parse_int(const std::string& token, int line) {
  long v = 0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("expected an integer, got '" + token + "'", line);
  }
  return v;
}

// Shortest decimal that round-trips to the same value.
template <class T>
std::string shortest(T v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct NumberedLine {
  int number;
  std::vector<std::string> tokens;
};

inline std::vector<NumberedLine> non_empty_lines(const std::string& text) {
  std::vector<NumberedLine> out;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto tokens = split_ws(line);
    if (!tokens.empty()) out.push_back({n, std::move(tokens)});
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Camera files
// ---------------------------------------------------------------------------

/// Contents of a cam.txt file: camera plus the depth-range line
/// "d_min d_interval [D d_max]".
struct CamFile {
  Camera camera;
  double depth_min = 0.0;
  double depth_interval = 0.0;
  std::optional<int> depth_count;
  std::optional<double> depth_max;

  /// Hypothesis range for `count` planes. Uses d_max when the file has it,
  /// otherwise d_min + d_interval * (count - 1).
  HypothesisSpace hypotheses(int count, DepthSampling mode) const {
    const double dmax = depth_max ? *depth_max : depth_min + depth_interval * (count - 1);
    return HypothesisSpace(depth_min, dmax, count, mode);
  }
};

inline std::string format_cam(const CamFile& cam) {
  std::ostringstream os;
  os << std::setprecision(17);
  const Mat3& r = cam.camera.rotation();
  const Vec3& t = cam.camera.translation();
  const Mat3& k = cam.camera.intrinsic();
  os << "extrinsic\n";
  for (int i = 0; i < 3; ++i) {
    os << r(i, 0) << ' ' << r(i, 1) << ' ' << r(i, 2) << ' ' << t(i) << '\n';
  }
  os << "0 0 0 1\n\nintrinsic\n";
  for (int i = 0; i < 3; ++i) os << k(i, 0) << ' ' << k(i, 1) << ' ' << k(i, 2) << '\n';
  os << '\n' << cam.depth_min << ' ' << cam.depth_interval;
  if (cam.depth_count) {
    os << ' ' << *cam.depth_count;
    if (cam.depth_max) os << ' ' << *cam.depth_max;
  }
  os << '\n';
  return os.str();
}

/// Parses cam.txt text. Rotations off by more than 1e-9 are replaced by the
/// nearest rotation; beyond 1e-3 a warning is emitted as well.
inline CamFile parse_cam(const std::string& text, const WarningSink& warn = default_warning) {
  const auto lines = detail::non_empty_lines(text);
  std::size_t pos = 0;
  const auto expect_word = [&](const char* word) {
    if (pos >= lines.size()) throw ParseError(std::string("missing '") + word + "' section");
    const auto& l = lines[pos];
    if (l.tokens.size() != 1 || l.tokens[0] != word) {
      throw ParseError(std::string("expected '") + word + "'", l.number);
    }
    ++pos;
  };
  const auto expect_row = [&](std::size_t n) {
    if (pos >= lines.size()) throw ParseError("unexpected end of camera file");
    const auto& l = lines[pos];
    if (l.tokens.size() != n) {
      throw ParseError("expected " + std::to_string(n) + " values, got " +
                           std::to_string(l.tokens.size()),
                       l.number);
    }
    std::vector<double> v;
    for (const auto& t : l.tokens) v.push_back(detail::parse_double(t, l.number));
    ++pos;
    return std::make_pair(v, l.number);
  };

  expect_word("extrinsic");
  Mat3 r;
  Vec3 t;
  for (int i = 0; i < 3; ++i) {
    const auto [row, _] = expect_row(4);
    for (int j = 0; j < 3; ++j) r(i, j) = row[j];
    t(i) = row[3];
  }
  {
    const auto [row, line] = expect_row(4);
    if (row[0] != 0.0 || row[1] != 0.0 || row[2] != 0.0 || row[3] != 1.0) {
      throw ParseError("last extrinsic row must be 0 0 0 1", line);
    }
  }
  expect_word("intrinsic");
  Mat3 k;
  for (int i = 0; i < 3; ++i) {
    const auto [row, _] = expect_row(3);
    for (int j = 0; j < 3; ++j) k(i, j) = row[j];
  }
  if (pos >= lines.size()) throw ParseError("missing depth range line");
  const auto& range = lines[pos];
  if (range.tokens.size() < 2 || range.tokens.size() > 4) {
    throw ParseError("depth range line needs 2 to 4 values", range.number);
  }
  if (pos + 1 != lines.size()) {
    throw ParseError("trailing content after depth range", lines[pos + 1].number);
  }

  const double err = Camera::rotation_error(r);
  if (err > 1e-9 || r.determinant() <= 0.0) {
    if (err > 1e-3) {
      warn("rotation deviates from orthonormal by " + detail::shortest(err) +
           "; replaced by the nearest rotation");
    }
    r = nearest_rotation(r);
  }

  CamFile cam{Camera(k, r, t), 0.0, 0.0, std::nullopt, std::nullopt};
  cam.depth_min = detail::parse_double(range.tokens[0], range.number);
  cam.depth_interval = detail::parse_double(range.tokens[1], range.number);
  if (range.tokens.size() >= 3) {
    cam.depth_count = static_cast<int>(detail::parse_int(range.tokens[2], range.number));
  }
  if (range.tokens.size() == 4) {
    cam.depth_max = detail::parse_double(range.tokens[3], range.number);
  }
  return cam;
}

inline CamFile read_cam(const fs::path& path, const WarningSink& warn = default_warning) {
  try {
    return parse_cam(detail::read_file(path), warn);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.line());
  }
}

inline void write_cam(const fs::path& path, const CamFile& cam) {
  detail::write_file(path, format_cam(cam));
}

// ---------------------------------------------------------------------------
// PFM
// ---------------------------------------------------------------------------

/// Single-channel float image, row 0 at the top.
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;
};

/// "Pf", "W H", negative scale (little-endian), rows bottom-to-top.
inline std::string encode_pfm(const FloatImage& img) {
  std::string out = "Pf\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n-1.0\n";
  out.reserve(out.size() + img.data.size() * 4);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      detail::append_f32_le(out, img.data[static_cast<std::size_t>(y) * img.width + x]);
    }
  }
  return out;
}

inline FloatImage decode_pfm(const std::string& bytes) {
  std::size_t pos = 0;
  const auto next_line = [&](int number) {
    const std::size_t end = bytes.find('\n', pos);
    if (end == std::string::npos) throw ParseError("truncated PFM header", number);
    std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  const std::string magic = next_line(1);
  if (magic == "PF") throw ParseError("colour PFM is not supported", 1);
  if (magic != "Pf") throw ParseError("not a PFM file", 1);
  const auto dims = detail::split_ws(next_line(2));
  if (dims.size() != 2) throw ParseError("expected 'width height'", 2);
  FloatImage img;
  img.width = static_cast<int>(detail::parse_int(dims[0], 2));
  img.height = static_cast<int>(detail::parse_int(dims[1], 2));
  if (img.width <= 0 || img.height <= 0) throw ParseError("non-positive PFM size", 2);
  const auto scale_tokens = detail::split_ws(next_line(3));
  if (scale_tokens.size() != 1) throw ParseError("expected a scale value", 3);
  const double scale = detail::parse_double(scale_tokens[0], 3);
  if (scale > 0.0) throw BigEndianUnsupported("big-endian PFM (positive scale)");
  if (scale == 0.0) throw ParseError("PFM scale must be non-zero", 3);

  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  if (bytes.size() - pos != n * 4) {
    throw ParseError("PFM payload has " + std::to_string(bytes.size() - pos) +
                     " bytes, expected " + std::to_string(n * 4));
  }
  img.data.resize(n);
  const char* p = bytes.data() + pos;
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x, p += 4) {
      img.data[static_cast<std::size_t>(y) * img.width + x] = detail::read_f32_le(p);
    }
  }
  return img;
}

inline FloatImage read_pfm(const fs::path& path) { return decode_pfm(detail::read_file(path)); }
inline void write_pfm(const fs::path& path, const FloatImage& img) {
  detail::write_file(path, encode_pfm(img));
}

// NaN marks invalid depth.
inline FloatImage to_float_image(const DepthMap& d) {
  FloatImage img{d.width, d.height, d.depth};
  for (std::size_t j = 0; j < img.data.size(); ++j) {
    if (!d.valid[j]) img.data[j] = std::numeric_limits<float>::quiet_NaN();
  }
  return img;
}

inline DepthMap to_depth_map(const FloatImage& img) {
  DepthMap d(img.width, img.height);
  for (std::size_t j = 0; j < img.data.size(); ++j) {
    if (std::isnan(img.data[j])) continue;
    d.depth[j] = img.data[j];
    d.valid[j] = 1;
  }
  return d;
}

inline FloatImage to_float_image(const ConfidenceMap& c) {
  return {c.width, c.height, c.prob};
}

inline ConfidenceMap to_confidence_map(const FloatImage& img) {
  ConfidenceMap c(img.width, img.height);
  c.prob = img.data;
  return c;
}

// ---------------------------------------------------------------------------
// PPM / PGM
// ---------------------------------------------------------------------------

/// Binary P5 (gray) / P6 (RGB) with maxval 255 or 65535 (16-bit samples are
/// big-endian, per the netpbm format).
inline std::string encode_pnm(const ImageBuffer& img, int maxval = 65535) {
  if (maxval != 255 && maxval != 65535) throw InvalidArgument("maxval must be 255 or 65535");
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) +
                    " " + std::to_string(img.height) + "\n" + std::to_string(maxval) + "\n";
  for (float v : img.data) {
    const auto q = static_cast<std::uint32_t>(
        std::lround(std::clamp(v, 0.0f, 1.0f) * static_cast<float>(maxval)));
    if (maxval > 255) out.push_back(static_cast<char>((q >> 8) & 0xffu));
    out.push_back(static_cast<char>(q & 0xffu));
  }
  return out;
}

inline ImageBuffer decode_pnm(const std::string& bytes) {
  std::size_t pos = 0;
  // Header tokens separated by whitespace, '#' comments allowed.
  const auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw ParseError("truncated PNM header");
    return bytes.substr(start, pos - start);
  };
  const std::string magic = token();
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw ParseError("unsupported PNM magic '" + magic + "'");
  const int w = static_cast<int>(detail::parse_int(token(), 0));
  const int h = static_cast<int>(detail::parse_int(token(), 0));
  const int maxval = static_cast<int>(detail::parse_int(token(), 0));
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw ParseError("invalid PNM header values");
  }
  ++pos;  // single whitespace byte before the raster
  const int bytes_per_sample = maxval > 255 ? 2 : 1;
  ImageBuffer img(w, h, channels);
  if (bytes.size() < pos || bytes.size() - pos != img.data.size() * bytes_per_sample) {
    throw ParseError("PNM raster size mismatch");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t j = 0; j < img.data.size(); ++j) {
    std::uint32_t v = *p++;
    if (bytes_per_sample == 2) v = (v << 8) | *p++;
    img.data[j] = static_cast<float>(v) / static_cast<float>(maxval);
  }
  return img;
}

inline ImageBuffer read_pnm(const fs::path& path) { return decode_pnm(detail::read_file(path)); }
inline void write_pnm(const fs::path& path, const ImageBuffer& img, int maxval = 65535) {
  detail::write_file(path, encode_pnm(img, maxval));
}

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

enum class PlyFormat { kAscii, kBinaryLittleEndian };

inline std::string encode_ply(const PointCloud& cloud, PlyFormat format) {
  if (cloud.has_colors() && cloud.colors.size() != cloud.points.size()) {
    throw InvalidArgument("point cloud colour count differs from point count");
  }
  std::string out = "ply\nformat ";
  out += format == PlyFormat::kAscii ? "ascii 1.0\n" : "binary_little_endian 1.0\n";
  out += "element vertex " + std::to_string(cloud.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_colors()) {
    out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  out += "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    const float xyz[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                          static_cast<float>(p.z())};
    if (format == PlyFormat::kAscii) {
      out += detail::shortest(xyz[0]) + ' ' + detail::shortest(xyz[1]) + ' ' +
             detail::shortest(xyz[2]);
      if (cloud.has_colors()) {
        const auto& c = cloud.colors[i];
        out += ' ' + std::to_string(c[0]) + ' ' + std::to_string(c[1]) + ' ' +
               std::to_string(c[2]);
      }
      out += '\n';
    } else {
      for (float v : xyz) detail::append_f32_le(out, v);
      if (cloud.has_colors()) {
        for (auto c : cloud.colors[i]) out.push_back(static_cast<char>(c));
      }
    }
  }
  return out;
}

inline void write_ply(const fs::path& path, const PointCloud& cloud,
                      PlyFormat format = PlyFormat::kBinaryLittleEndian) {
  detail::write_file(path, encode_ply(cloud, format));
}

/// Reads the vertex element of an ascii or binary_little_endian PLY. Only
/// x/y/z and red/green/blue are kept; other scalar properties are skipped.
inline PointCloud decode_ply(const std::string& bytes) {
  std::size_t pos = 0;
  int line_no = 0;
  const auto next_line = [&]() {
    const std::size_t end = bytes.find('\n', pos);
    if (end == std::string::npos) throw ParseError("truncated PLY header", line_no + 1);
    std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  if (next_line() != "ply") throw ParseError("missing 'ply' magic", 1);

  struct Property {
    std::string name;
    int size;
    char kind;  // 'f' float, 'd' double, 'u' unsigned, 'i' signed
  };
  const std::map<std::string, std::pair<int, char>> types{
      {"char", {1, 'i'}},   {"int8", {1, 'i'}},    {"uchar", {1, 'u'}},
      {"uint8", {1, 'u'}},  {"short", {2, 'i'}},   {"int16", {2, 'i'}},
      {"ushort", {2, 'u'}}, {"uint16", {2, 'u'}},  {"int", {4, 'i'}},
      {"int32", {4, 'i'}},  {"uint", {4, 'u'}},    {"uint32", {4, 'u'}},
      {"float", {4, 'f'}},  {"float32", {4, 'f'}}, {"double", {8, 'd'}},
      {"float64", {8, 'd'}},
  };

  bool ascii = false;
  bool seen_format = false;
  long vertex_count = -1;
  bool in_vertex = false;
  bool vertex_first = false;
  std::vector<Property> props;
  for (;;) {
    const auto tokens = detail::split_ws(next_line());
    if (tokens.empty()) continue;
    if (tokens[0] == "end_header") break;
    if (tokens[0] == "comment" || tokens[0] == "obj_info") continue;
    if (tokens[0] == "format") {
      if (tokens.size() != 3) throw ParseError("malformed format line", line_no);
      if (tokens[1] == "ascii") ascii = true;
      else if (tokens[1] == "binary_little_endian") ascii = false;
      else throw ParseError("unsupported PLY format " + tokens[1], line_no);
      seen_format = true;
    } else if (tokens[0] == "element") {
      if (tokens.size() != 3) throw ParseError("malformed element line", line_no);
      in_vertex = tokens[1] == "vertex";
      if (in_vertex) {
        vertex_first = vertex_count < 0 && props.empty();
        vertex_count = detail::parse_int(tokens[2], line_no);
      } else if (vertex_count < 0) {
        throw ParseError("vertex element must come first", line_no);
      }
    } else if (tokens[0] == "property") {
      if (!in_vertex) continue;
      if (tokens.size() != 3) throw ParseError("unsupported vertex property", line_no);
      const auto it = types.find(tokens[1]);
      if (it == types.end()) throw ParseError("unknown property type " + tokens[1], line_no);
      props.push_back({tokens[2], it->second.first, it->second.second});
    } else {
      throw ParseError("unexpected header line", line_no);
    }
  }
  if (!seen_format) throw ParseError("missing format line");
  if (vertex_count < 0 || !vertex_first) throw ParseError("missing vertex element");

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (std::size_t k = 0; k < props.size(); ++k) {
    const auto& n = props[k].name;
    const int kk = static_cast<int>(k);
    if (n == "x") ix = kk;
    else if (n == "y") iy = kk;
    else if (n == "z") iz = kk;
    else if (n == "red") ir = kk;
    else if (n == "green") ig = kk;
    else if (n == "blue") ib = kk;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError("vertex lacks x/y/z");
  const bool colored = ir >= 0 && ig >= 0 && ib >= 0;

  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(vertex_count));
  std::vector<double> values(props.size());
  if (ascii) {
    std::istringstream in(bytes.substr(pos));
    std::string line;
    for (long v = 0; v < vertex_count; ++v) {
      ++line_no;
      if (!std::getline(in, line)) throw ParseError("missing vertex rows", line_no);
      const auto tokens = detail::split_ws(line);
      if (tokens.size() != props.size()) throw ParseError("vertex row size mismatch", line_no);
      for (std::size_t k = 0; k < props.size(); ++k) {
        values[k] = detail::parse_double(tokens[k], line_no);
        if (props[k].kind == 'f') values[k] = static_cast<float>(values[k]);
      }
      cloud.points.emplace_back(values[ix], values[iy], values[iz]);
      if (colored) {
        cloud.colors.push_back({static_cast<std::uint8_t>(values[ir]),
                                static_cast<std::uint8_t>(values[ig]),
                                static_cast<std::uint8_t>(values[ib])});
      }
    }
  } else {
    std::size_t stride = 0;
    for (const auto& p : props) stride += static_cast<std::size_t>(p.size);
    if (bytes.size() - pos < stride * static_cast<std::size_t>(vertex_count)) {
      throw ParseError("binary PLY payload is truncated");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    for (long v = 0; v < vertex_count; ++v) {
      for (std::size_t k = 0; k < props.size(); ++k) {
        std::uint64_t raw = 0;
        for (int b = props[k].size - 1; b >= 0; --b) raw = (raw << 8) | p[b];
        switch (props[k].kind) {
          case 'f': values[k] = std::bit_cast<float>(static_cast<std::uint32_t>(raw)); break;
          case 'd': values[k] = std::bit_cast<double>(raw); break;
          case 'u': values[k] = static_cast<double>(raw); break;
          default: {
            const int bits = props[k].size * 8;
            std::int64_t s = static_cast<std::int64_t>(raw);
            if (bits < 64 && (raw >> (bits - 1)) & 1u) s -= std::int64_t{1} << bits;
            values[k] = static_cast<double>(s);
          }
        }
        p += props[k].size;
      }
      cloud.points.emplace_back(values[ix], values[iy], values[iz]);
      if (colored) {
        cloud.colors.push_back({static_cast<std::uint8_t>(values[ir]),
                                static_cast<std::uint8_t>(values[ig]),
                                static_cast<std::uint8_t>(values[ib])});
      }
    }
  }
  return cloud;
}

inline PointCloud read_ply(const fs::path& path) { return decode_ply(detail::read_file(path)); }

// ---------------------------------------------------------------------------
// View pairing (pair.txt)
// ---------------------------------------------------------------------------

/// Ordered source views per reference view, with their selection scores.
struct ViewPairs {
  std::vector<std::vector<std::pair<int, double>>> sources;

  std::vector<int> source_ids(std::size_t ref, std::size_t limit = SIZE_MAX) const {
    std::vector<int> ids;
    for (const auto& [id, score] : sources.at(ref)) {
      if (ids.size() >= limit) break;
      ids.push_back(id);
    }
    return ids;
  }
};

/// Layout: view count, then per view a line with its index and a line
/// "k id0 score0 id1 score1 ...".
inline std::string format_pairs(const ViewPairs& pairs) {
  std::ostringstream os;
  os << pairs.sources.size() << '\n';
  for (std::size_t i = 0; i < pairs.sources.size(); ++i) {
    os << i << '\n' << pairs.sources[i].size();
    for (const auto& [id, score] : pairs.sources[i]) os << ' ' << id << ' ' << score;
    os << '\n';
  }
  return os.str();
}

inline ViewPairs parse_pairs(const std::string& text) {
  const auto lines = detail::non_empty_lines(text);
  if (lines.empty()) throw ParseError("empty pair file");
  if (lines[0].tokens.size() != 1) throw ParseError("expected the view count", lines[0].number);
  const long n = detail::parse_int(lines[0].tokens[0], lines[0].number);
  if (n < 0 || lines.size() != static_cast<std::size_t>(1 + 2 * n)) {
    throw ParseError("pair file has " + std::to_string(lines.size()) +
                     " non-empty lines, expected " + std::to_string(1 + 2 * n));
  }
  ViewPairs pairs;
  pairs.sources.resize(static_cast<std::size_t>(n));
  for (long v = 0; v < n; ++v) {
    const auto& head = lines[1 + 2 * v];
    const auto& body = lines[2 + 2 * v];
    if (head.tokens.size() != 1) throw ParseError("expected a view index", head.number);
    const long ref = detail::parse_int(head.tokens[0], head.number);
    if (ref < 0 || ref >= n) throw ParseError("view index out of range", head.number);
    const long k = detail::parse_int(body.tokens.at(0), body.number);
    if (k < 0 || body.tokens.size() != static_cast<std::size_t>(1 + 2 * k)) {
      throw ParseError("source list length mismatch", body.number);
    }
    auto& list = pairs.sources[static_cast<std::size_t>(ref)];
    for (long s = 0; s < k; ++s) {
      const long id = detail::parse_int(body.tokens[1 + 2 * s], body.number);
      if (id < 0 || id >= n || id == ref) throw ParseError("invalid source index", body.number);
      list.emplace_back(static_cast<int>(id),
                        detail::parse_double(body.tokens[2 + 2 * s], body.number));
    }
  }
  return pairs;
}

inline ViewPairs read_pairs(const fs::path& path) {
  try {
    return parse_pairs(detail::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.line());
  }
}

inline void write_pairs(const fs::path& path, const ViewPairs& pairs) {
  detail::write_file(path, format_pairs(pairs));
}

/// Pairs for a camera ring: every other view, nearest ring neighbours first.
inline ViewPairs ring_pairs(int views) {
  ViewPairs pairs;
  pairs.sources.resize(static_cast<std::size_t>(views));
  for (int i = 0; i < views; ++i) {
    for (int step = 1; step <= views / 2; ++step) {
      const int fwd = (i + step) % views;
      const int back = (i - step + views) % views;
      const double score = static_cast<double>(views - step);
      pairs.sources[i].emplace_back(fwd, score);
      if (back != fwd) pairs.sources[i].emplace_back(back, score);
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Network weight container
// ---------------------------------------------------------------------------
//
// Layout:
//   line 1  "SWEEPFUSE-WEIGHTS 1"
//   line 2  byte length of the manifest
//   manifest: JSON {"layers": [{"name", "kind", "in", "out", "kernel",
//             "dilation", "groups", "offset", "count"}, ...]}
//   payload: little-endian float32. Each layer stores kernel [out][in][3][3],
//             bias [out], then group-norm scale [out] and shift [out] when
//             "groups" > 0. "offset"/"count" index the payload in floats.

struct NamedLayer {
  std::string name;
  std::string kind;  // "conv" or "deconv"
  ConvLayerWeights weights;
};

struct WeightBundle {
  std::vector<NamedLayer> layers;

  const NamedLayer* find(const std::string& name) const {
    for (const auto& l : layers) {
      if (l.name == name) return &l;
    }
    return nullptr;
  }

  const ConvLayerWeights& get(const std::string& name) const {
    const auto* l = find(name);
    if (!l) throw WeightGraphMismatch("weight file lacks layer " + name);
    return l->weights;
  }

  bool has_prefix(const std::string& prefix) const {
    for (const auto& l : layers) {
      if (l.name.rfind(prefix, 0) == 0) return true;
    }
    return false;
  }
};

inline const char* kWeightsMagic = "SWEEPFUSE-WEIGHTS 1";

inline std::string encode_weights(const WeightBundle& bundle) {
  nlohmann::json manifest;
  manifest["layers"] = nlohmann::json::array();
  std::string payload;
  std::size_t offset = 0;
  for (const auto& l : bundle.layers) {
    const auto& w = l.weights;
    w.check(l.name);
    const std::size_t count = w.parameter_count();
    manifest["layers"].push_back({{"name", l.name},
                                  {"kind", l.kind},
                                  {"in", w.in_channels},
                                  {"out", w.out_channels},
                                  {"kernel", 3},
                                  {"dilation", w.dilation},
                                  {"groups", w.norm ? w.norm->groups : 0},
                                  {"offset", offset},
                                  {"count", count}});
    for (float v : w.kernel) detail::append_f32_le(payload, v);
    for (float v : w.bias) detail::append_f32_le(payload, v);
    if (w.norm) {
      for (float v : w.norm->scale) detail::append_f32_le(payload, v);
      for (float v : w.norm->shift) detail::append_f32_le(payload, v);
    }
    offset += count;
  }
  const std::string text = manifest.dump();
  return std::string(kWeightsMagic) + "\n" + std::to_string(text.size()) + "\n" + text +
         payload;
}

inline WeightBundle decode_weights(const std::string& bytes) {
  std::size_t pos = 0;
  const auto next_line = [&](int number) {
    const std::size_t end = bytes.find('\n', pos);
    if (end == std::string::npos) throw ParseError("truncated weight header", number);
    std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    return line;
  };
  if (next_line(1) != kWeightsMagic) throw ParseError("not a weight file", 1);
  const auto len = static_cast<std::size_t>(detail::parse_int(next_line(2), 2));
  if (bytes.size() - pos < len) throw ParseError("truncated weight manifest", 3);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(pos, len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("weight manifest: ") + e.what(), 3);
  }
  pos += len;
  const std::size_t floats = (bytes.size() - pos) / 4;
  if ((bytes.size() - pos) % 4 != 0) throw ParseError("weight payload is not float32-aligned");
  const char* payload = bytes.data() + pos;

  WeightBundle bundle;
  try {
    for (const auto& entry : manifest.at("layers")) {
      NamedLayer l;
      l.name = entry.at("name").get<std::string>();
      l.kind = entry.at("kind").get<std::string>();
      if (entry.at("kernel").get<int>() != 3) {
        throw WeightGraphMismatch("layer " + l.name + ": only 3x3 kernels are supported");
      }
      l.weights = ConvLayerWeights(entry.at("in").get<int>(), entry.at("out").get<int>(),
                                   entry.at("dilation").get<int>());
      const int groups = entry.at("groups").get<int>();
      if (groups > 0) {
        l.weights.norm = GroupNormParams{groups, std::vector<float>(l.weights.out_channels),
                                         std::vector<float>(l.weights.out_channels)};
      }
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      if (count != l.weights.parameter_count() || offset + count > floats) {
        throw ParseError("layer " + l.name + ": payload range does not match its shape");
      }
      const char* p = payload + offset * 4;
      const auto fill = [&](std::vector<float>& dst) {
        for (auto& v : dst) {
          v = detail::read_f32_le(p);
          p += 4;
        }
      };
      fill(l.weights.kernel);
      fill(l.weights.bias);
      if (l.weights.norm) {
        fill(l.weights.norm->scale);
        fill(l.weights.norm->shift);
      }
      l.weights.check(l.name);
      bundle.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("weight manifest: ") + e.what());
  }
  return bundle;
}

inline WeightBundle read_weights(const fs::path& path) {
  return decode_weights(detail::read_file(path));
}

inline void write_weights(const fs::path& path, const WeightBundle& bundle) {
  detail::write_file(path, encode_weights(bundle));
}

inline std::string drenet_layer_name(std::size_t i) {
  return std::string("drenet.") + DrenetWeights::kLayout[i].name;
}

inline std::string lstm_gate_name(std::size_t cell, std::size_t gate) {
  static constexpr std::array<const char*, 4> kGates{"input", "forget", "output", "candidate"};
  return "hulstm.cell" + std::to_string(cell) + "." + kGates[gate];
}

inline void append_layers(WeightBundle& bundle, const DrenetWeights& w) {
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    bundle.layers.push_back({drenet_layer_name(i), "conv", w.layers[i]});
  }
}

inline void append_layers(WeightBundle& bundle, const HuLstmWeights& w) {
  for (std::size_t c = 0; c < w.cells.size(); ++c) {
    const auto gates = w.cells[c].gates();
    for (std::size_t g = 0; g < gates.size(); ++g) {
      bundle.layers.push_back({lstm_gate_name(c, g), "conv", *gates[g]});
    }
  }
  bundle.layers.push_back({"hulstm.up_mid", "deconv", w.up_mid});
  bundle.layers.push_back({"hulstm.up_top", "deconv", w.up_top});
  bundle.layers.push_back({"hulstm.head", "conv", w.head});
}

inline DrenetWeights drenet_from(const WeightBundle& bundle) {
  DrenetWeights w;
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    w.layers[i] = bundle.get(drenet_layer_name(i));
  }
  w.check();
  return w;
}

inline HuLstmWeights hulstm_from(const WeightBundle& bundle) {
  HuLstmWeights w = HuLstmWeights::zeros();
  for (std::size_t c = 0; c < w.cells.size(); ++c) {
    auto gates = w.cells[c].gates();
    for (std::size_t g = 0; g < gates.size(); ++g) *gates[g] = bundle.get(lstm_gate_name(c, g));
  }
  w.up_mid = bundle.get("hulstm.up_mid");
  w.up_top = bundle.get("hulstm.up_top");
  w.head = bundle.get("hulstm.head");
  w.check();
  return w;
}

// ---------------------------------------------------------------------------
// Project directory layout
// ---------------------------------------------------------------------------

/// images/NNNNNNNN.ppm, cams/NNNNNNNN_cam.txt, depths/NNNNNNNN.pfm,
/// depths/NNNNNNNN_conf.pfm, gt_depths/NNNNNNNN.pfm, pair.txt, gt.ply.
struct ProjectLayout {
  fs::path root;

  static std::string index(std::size_t i) {
    std::ostringstream os;
    os << std::setw(8) << std::setfill('0') << i;
    return os.str();
  }

  fs::path image(std::size_t i) const { return root / "images" / (index(i) + ".ppm"); }
  fs::path camera(std::size_t i) const { return root / "cams" / (index(i) + "_cam.txt"); }
  fs::path depth(std::size_t i) const { return root / "depths" / (index(i) + ".pfm"); }
  fs::path confidence(std::size_t i) const {
    return root / "depths" / (index(i) + "_conf.pfm");
  }
  fs::path gt_depth(std::size_t i) const { return root / "gt_depths" / (index(i) + ".pfm"); }
  fs::path pairs() const { return root / "pair.txt"; }
  fs::path gt_cloud() const { return root / "gt.ply"; }

  // Number of consecutive camera files starting at index 0.
  std::size_t count_views() const {
    std::size_t n = 0;
    while (fs::exists(camera(n))) ++n;
    return n;
  }
};

}  // namespace sweepfuse
