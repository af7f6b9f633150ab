#pragma once

// Synthetic attribute images with a known property function, the D2CD tensor
// archive, and an IDX loader.

#include "d2c/color.hpp"
#include "d2c/core.hpp"
#include "d2c/io.hpp"
#include "d2c/parallel.hpp"

#include <array>
#include <charconv>
#include <optional>
#include <sstream>

namespace d2c {

/// Images as rows in [0, 1] plus an integer attribute table.
struct TensorArchive {
  ImageShape shape;
  Matrix images;
  std::vector<std::string> attribute_names;
  Eigen::MatrixXi attributes;

  Eigen::Index count() const { return images.rows(); }

  int column(std::string_view name) const {
    for (std::size_t j = 0; j < attribute_names.size(); ++j)
      if (attribute_names[j] == name) return static_cast<int>(j);
    fail(Errc::invalid_parameter, "data", "archive has no attribute '" + std::string(name) + "'");
  }

  bool operator==(const TensorArchive& o) const {
    return shape == o.shape && images.rows() == o.images.rows() && images.cols() == o.images.cols() &&
           images == o.images && attribute_names == o.attribute_names &&
           attributes.rows() == o.attributes.rows() && attributes.cols() == o.attributes.cols() &&
           attributes == o.attributes;
  }
};

inline constexpr std::uint32_t kArchiveVersion = 1;

// ---------------------------------------------------------------------------
// Synthetic dataset

enum class ShapeKind { disc = 0, square = 1 };
enum class HueKind { cool = 0, warm = 1 };

struct Attributes {
  ShapeKind shape = ShapeKind::disc;
  HueKind hue = HueKind::cool;
  int quadrant = 0;  // 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right

  bool operator==(const Attributes&) const = default;
};

inline const std::vector<std::string>& synthetic_attribute_names() {
  static const std::vector<std::string> names{"shape", "hue", "quadrant"};
  return names;
}

struct SyntheticSpec {
  ImageShape shape;
  double square_rate = 0.5;
  double warm_rate = 0.5;
  std::array<double, 4> quadrant_rates{0.25, 0.25, 0.25, 0.25};
  std::size_t count = 2000;
  std::uint64_t seed = 0;

  void validate() const {
    require(shape.height >= 8 && shape.width >= 8, Errc::invalid_parameter, "data",
            "synthetic images must be at least 8x8");
    require(shape.channels == 1 || shape.channels == 3, Errc::invalid_parameter, "data",
            "synthetic images have 1 or 3 channels");
    auto rate = [](double p) { return p >= 0.0 && p <= 1.0; };
    require(rate(square_rate) && rate(warm_rate), Errc::invalid_parameter, "data",
            "base rates must lie in [0, 1]");
    double total = 0.0;
    for (double q : quadrant_rates) {
      require(q >= 0.0, Errc::invalid_parameter, "data", "quadrant rates must be nonnegative");
      total += q;
    }
    require(std::abs(total - 1.0) < 1e-9, Errc::invalid_parameter, "data",
            "quadrant rates must sum to 1");
  }
};

inline constexpr double kBackground = 0.08;

namespace detail {

inline int draw_quadrant(const std::array<double, 4>& rates, double u) {
  double acc = 0.0;
  for (int q = 0; q < 3; ++q) {
    acc += rates[q];
    if (u < acc) return q;
  }
  return 3;
}

/// Object footprint: a square of side 7/16 of the width or a disc of radius 3.5/16.
inline bool inside(ShapeKind kind, const ImageShape& shape, int dy, int dx) {
  const double unit = shape.width / 16.0;
  if (kind == ShapeKind::square) {
    const int half = static_cast<int>(std::lround(3.0 * unit));
    return std::abs(dx) <= half && std::abs(dy) <= half;
  }
  const double r = 3.5 * unit;
  return dx * dx + dy * dy <= r * r;
}

}  // namespace detail

/// Draws the attributes and renders image `index` of the spec.
inline std::pair<RowVector, Attributes> render_synthetic(const SyntheticSpec& spec, std::size_t index) {
  Rng rng = derive_rng(spec.seed, 0xda7a, index);
  Attributes a;
  a.shape = uniform01(rng) < spec.square_rate ? ShapeKind::square : ShapeKind::disc;
  a.hue = uniform01(rng) < spec.warm_rate ? HueKind::warm : HueKind::cool;
  a.quadrant = detail::draw_quadrant(spec.quadrant_rates, uniform01(rng));

  const ImageShape& s = spec.shape;
  std::uniform_int_distribution<int> jitter(-1, 1);
  const int cx = (a.quadrant % 2 == 0 ? s.width / 4 : (3 * s.width) / 4) + jitter(rng);
  const int cy = (a.quadrant / 2 == 0 ? s.height / 4 : (3 * s.height) / 4) + jitter(rng);

  std::array<double, 3> color{};
  if (s.channels == 3) {
    const double h = a.hue == HueKind::warm ? 0.12 * uniform01(rng) : 0.5 + 0.16 * uniform01(rng);
    const double sat = 0.7 + 0.3 * uniform01(rng);
    const double val = 0.75 + 0.25 * uniform01(rng);
    detail::hsv_to_rgb(h, sat, val, color[0], color[1], color[2]);
  } else {
    color[0] = a.hue == HueKind::warm ? 0.85 + 0.15 * uniform01(rng) : 0.45 + 0.15 * uniform01(rng);
  }

  RowVector img = RowVector::Constant(s.size(), kBackground);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if (detail::inside(a.shape, s, y - cy, x - cx))
        for (int c = 0; c < s.channels; ++c) img(s.index(y, x, c)) = color[static_cast<std::size_t>(c)];
  // stored as f32 in archives; rounding here keeps archives lossless
  for (Eigen::Index i = 0; i < img.size(); ++i) img(i) = static_cast<float>(img(i));
  return {img, a};
}

inline TensorArchive generate_synthetic(const SyntheticSpec& spec, int threads = 1) {
  spec.validate();
  TensorArchive out;
  out.shape = spec.shape;
  out.images.resize(static_cast<Eigen::Index>(spec.count), spec.shape.size());
  out.attribute_names = synthetic_attribute_names();
  out.attributes.resize(static_cast<Eigen::Index>(spec.count), 3);
  parallel_for(spec.count, threads, [&](std::size_t i) {
    auto [img, a] = render_synthetic(spec, i);
    const auto r = static_cast<Eigen::Index>(i);
    out.images.row(r) = img;
    out.attributes(r, 0) = static_cast<int>(a.shape);
    out.attributes(r, 1) = static_cast<int>(a.hue);
    out.attributes(r, 2) = a.quadrant;
  });
  return out;
}

/// The property function f: reads the attributes back from pixels. Works on
/// generated (non-binary) images by thresholding; nullopt when no object is found.
inline std::optional<Attributes> read_attributes(const RowVector& img, const ImageShape& s) {
  require(img.size() == s.size(), Errc::shape_mismatch, "data", "image does not match its shape");
  const double threshold = s.channels == 3 ? 0.42 : 0.3;
  int count = 0, ymin = s.height, ymax = -1, xmin = s.width, xmax = -1;
  double sx = 0.0, sy = 0.0, warmth = 0.0;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      double peak = 0.0;
      for (int c = 0; c < s.channels; ++c) peak = std::max(peak, img(s.index(y, x, c)));
      if (peak <= threshold) continue;
      ++count;
      sx += x;
      sy += y;
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      warmth += s.channels == 3 ? img(s.index(y, x, 0)) - img(s.index(y, x, 2)) : peak - 0.72;
    }
  if (count == 0) return std::nullopt;
  Attributes a;
  a.hue = warmth > 0.0 ? HueKind::warm : HueKind::cool;
  const bool right = sx / count >= s.width / 2.0;
  const bool bottom = sy / count >= s.height / 2.0;
  a.quadrant = (bottom ? 2 : 0) + (right ? 1 : 0);
  const double fill = count / static_cast<double>((ymax - ymin + 1) * (xmax - xmin + 1));
  a.shape = fill > 0.88 ? ShapeKind::square : ShapeKind::disc;
  return a;
}

/// Attribute test such as "hue=warm", "shape=square" or "quadrant=2".
struct AttributeQuery {
  std::string name;
  int value = 0;

  static AttributeQuery parse(std::string_view text) {
    const auto eq = text.find('=');
    require(eq != std::string_view::npos, Errc::invalid_parameter, "data",
            "label must look like name=value, got '" + std::string(text) + "'");
    AttributeQuery q{std::string(text.substr(0, eq)), 0};
    const std::string_view v = text.substr(eq + 1);
    if (q.name == "hue" && (v == "warm" || v == "cool")) {
      q.value = v == "warm" ? 1 : 0;
    } else if (q.name == "shape" && (v == "square" || v == "disc")) {
      q.value = v == "square" ? 1 : 0;
    } else {
      const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), q.value);
      require(ec == std::errc{} && p == v.data() + v.size() && !v.empty(), Errc::invalid_parameter,
              "data", "unrecognized label value '" + std::string(v) + "'");
      require(q.name != "quadrant" || (q.value >= 0 && q.value < 4), Errc::invalid_parameter, "data",
              "quadrant must be 0..3");
    }
    return q;
  }

  /// Evaluates the query on oracle output; false when the oracle found nothing.
  bool holds(const std::optional<Attributes>& a) const {
    if (!a) return false;
    if (name == "shape") return static_cast<int>(a->shape) == value;
    if (name == "hue") return static_cast<int>(a->hue) == value;
    if (name == "quadrant") return a->quadrant == value;
    fail(Errc::invalid_parameter, "data", "the oracle has no attribute '" + name + "'");
  }

  std::vector<int> labels(const TensorArchive& archive) const {
    const int col = archive.column(name);
    std::vector<int> out(static_cast<std::size_t>(archive.count()));
    for (Eigen::Index i = 0; i < archive.count(); ++i) out[static_cast<std::size_t>(i)] = archive.attributes(i, col) == value;
    return out;
  }
};

// ---------------------------------------------------------------------------
// D2CD archive

inline std::vector<std::uint8_t> serialize_archive(const TensorArchive& a) {
  require(a.images.cols() == a.shape.size(), Errc::shape_mismatch, "data",
          "image rows do not match the declared shape");
  require(a.attributes.rows() == a.images.rows() || a.attribute_names.empty(), Errc::shape_mismatch,
          "data", "attribute table length differs from image count");
  require(static_cast<std::size_t>(a.attributes.cols()) == a.attribute_names.size() || a.attribute_names.empty(),
          Errc::shape_mismatch, "data", "attribute columns do not match their names");
  io::ByteWriter w;
  w.str("D2CD");
  w.u32(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(a.images.rows()));
  w.u8(3);
  w.u32(static_cast<std::uint32_t>(a.shape.height));
  w.u32(static_cast<std::uint32_t>(a.shape.width));
  w.u32(static_cast<std::uint32_t>(a.shape.channels));
  for (Eigen::Index i = 0; i < a.images.rows(); ++i)
    for (Eigen::Index j = 0; j < a.images.cols(); ++j) w.f32(static_cast<float>(a.images(i, j)));

  std::string csv = "index";
  for (const auto& n : a.attribute_names) csv += "," + n;
  csv += "\n";
  for (Eigen::Index i = 0; i < a.images.rows(); ++i) {
    csv += std::to_string(i);
    for (std::size_t j = 0; j < a.attribute_names.size(); ++j)
      csv += "," + std::to_string(a.attributes(i, static_cast<Eigen::Index>(j)));
    csv += "\n";
  }
  w.u32(static_cast<std::uint32_t>(csv.size()));
  w.str(csv);
  w.seal();
  return w.take();
}

namespace detail {

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline int parse_int(std::string_view s, Errc code, const char* component) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && p == s.data() + s.size() && !s.empty(), code, component,
          "expected an integer, got '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

inline TensorArchive deserialize_archive(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "D2CD"), Errc::corrupt_header,
          "data", "bad archive magic");
  io::ByteReader r(bytes, Errc::truncated_payload, "data");
  r.str(4);
  require(r.u32() == kArchiveVersion, Errc::corrupt_header, "data", "unsupported archive version");
  const std::uint32_t count = r.u32();
  const std::uint8_t rank = r.u8();
  require(rank == 3, Errc::corrupt_header, "data", "archive rank must be 3");
  TensorArchive a;
  a.shape.height = static_cast<int>(r.u32());
  a.shape.width = static_cast<int>(r.u32());
  a.shape.channels = static_cast<int>(r.u32());
  require(a.shape.height > 0 && a.shape.width > 0 && a.shape.channels > 0, Errc::corrupt_header, "data",
          "zero-sized image dimension");
  const std::size_t values = std::size_t{count} * static_cast<std::size_t>(a.shape.size());
  r.need(values * sizeof(float) + 4 + 4);
  io::verify_crc(bytes, Errc::corrupt_header, "data");

  a.images.resize(count, a.shape.size());
  for (std::uint32_t i = 0; i < count; ++i)
    for (int j = 0; j < a.shape.size(); ++j) a.images(i, j) = r.f32();
  const std::uint32_t csv_len = r.u32();
  require(r.remaining() == std::size_t{csv_len} + 4, Errc::corrupt_header, "data",
          "attribute block length disagrees with file size");
  const std::string csv = r.str(csv_len);

  std::istringstream in(csv);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::corrupt_header, "data", "missing attribute header");
  auto header = detail::split(line, ',');
  require(!header.empty() && header[0] == "index", Errc::corrupt_header, "data", "bad attribute header");
  a.attribute_names.assign(header.begin() + 1, header.end());
  a.attributes.resize(count, static_cast<Eigen::Index>(a.attribute_names.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    require(static_cast<bool>(std::getline(in, line)), Errc::corrupt_header, "data", "missing attribute row");
    auto cells = detail::split(line, ',');
    require(cells.size() == header.size(), Errc::corrupt_header, "data", "ragged attribute row");
    require(detail::parse_int(cells[0], Errc::corrupt_header, "data") == static_cast<int>(i), Errc::corrupt_header,
            "data", "attribute rows out of order");
    for (std::size_t j = 1; j < cells.size(); ++j)
      a.attributes(i, static_cast<Eigen::Index>(j - 1)) = detail::parse_int(cells[j], Errc::corrupt_header, "data");
  }
  return a;
}

inline void save_archive(const std::filesystem::path& path, const TensorArchive& a) {
  io::write_file(path, serialize_archive(a));
}

inline TensorArchive load_archive(const std::filesystem::path& path) {
  return deserialize_archive(io::read_file(path));
}

// ---------------------------------------------------------------------------
// IDX (big-endian, unsigned byte payload)

/// Parses an IDX image file: dims (n, h, w) or (n, h, w, c). Pixel bytes are
/// mapped to [0, 1] by dividing by 255.
inline TensorArchive parse_idx(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 4 && bytes[0] == 0 && bytes[1] == 0, Errc::corrupt_header, "data",
          "bad IDX magic");
  require(bytes[2] == 0x08, Errc::corrupt_header, "data", "only unsigned-byte IDX payloads are supported");
  const int ndims = bytes[3];
  require(ndims == 3 || ndims == 4, Errc::corrupt_header, "data", "IDX image files have 3 or 4 dimensions");
  io::ByteReader r(bytes, Errc::corrupt_header, "data");
  r.block(4);
  std::vector<std::uint32_t> dims;
  for (int i = 0; i < ndims; ++i) dims.push_back(r.u32_be());
  for (std::size_t i = 1; i < dims.size(); ++i)
    require(dims[i] > 0, Errc::corrupt_header, "data", "zero-sized IDX dimension");
  TensorArchive a;
  a.shape = {static_cast<int>(dims[1]), static_cast<int>(dims[2]), ndims == 4 ? static_cast<int>(dims[3]) : 1};
  const std::size_t values = std::size_t{dims[0]} * static_cast<std::size_t>(a.shape.size());
  require(r.remaining() >= values, Errc::truncated_payload, "data",
          "IDX declares " + std::to_string(values) + " bytes of pixels, file has " + std::to_string(r.remaining()));
  auto payload = r.block(values);
  a.images.resize(dims[0], a.shape.size());
  for (std::uint32_t i = 0; i < dims[0]; ++i)
    for (int j = 0; j < a.shape.size(); ++j)
      a.images(i, j) = payload[std::size_t{i} * static_cast<std::size_t>(a.shape.size()) + static_cast<std::size_t>(j)] / 255.0;
  a.attributes.resize(dims[0], 0);
  return a;
}

inline TensorArchive load_idx(const std::filesystem::path& path) { return parse_idx(io::read_file(path)); }

// ---------------------------------------------------------------------------
// Label CSV: index,label

inline std::vector<std::pair<std::size_t, int>> parse_labels(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == "index,label", Errc::io_error, "data",
          "label file must start with the header index,label");
  std::vector<std::pair<std::size_t, int>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = detail::split(line, ',');
    require(cells.size() == 2, Errc::io_error, "data", "label rows have two columns");
    const int index = detail::parse_int(cells[0], Errc::io_error, "data");
    require(index >= 0, Errc::io_error, "data", "negative label index");
    out.emplace_back(static_cast<std::size_t>(index), detail::parse_int(cells[1], Errc::io_error, "data"));
  }
  return out;
}

inline std::string format_labels(const std::vector<std::pair<std::size_t, int>>& labels) {
  std::string out = "index,label\n";
  for (const auto& [i, l] : labels) out += std::to_string(i) + "," + std::to_string(l) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// 8-bit binary PPM grid

inline std::vector<std::uint8_t> ppm_grid(const Matrix& images, const ImageShape& shape, int columns = 8) {
  require(images.cols() == shape.size(), Errc::shape_mismatch, "data", "images do not match their shape");
  require(columns >= 1, Errc::invalid_parameter, "data", "grid needs at least one column");
  const int n = static_cast<int>(images.rows());
  const int cols = std::max(1, std::min(columns, n));
  const int rows = std::max(1, (n + cols - 1) / cols);
  const int pad = 1;
  const int width = cols * (shape.width + pad) + pad;
  const int height = rows * (shape.height + pad) + pad;
  std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::size_t base = out.size();
  out.resize(base + static_cast<std::size_t>(width) * height * 3, 255);
  for (int k = 0; k < n; ++k) {
    const int oy = pad + (k / cols) * (shape.height + pad);
    const int ox = pad + (k % cols) * (shape.width + pad);
    for (int y = 0; y < shape.height; ++y)
      for (int x = 0; x < shape.width; ++x)
        for (int c = 0; c < 3; ++c) {
          const int src = shape.channels == 3 ? c : 0;
          const double v = std::clamp(images(k, shape.index(y, x, src)), 0.0, 1.0);
          out[base + ((static_cast<std::size_t>(oy + y) * width) + ox + x) * 3 + c] =
              static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
  }
  return out;
}

}  // namespace d2c
