#pragma once

// D2C1 container: a flat list of named numeric tables.

#include "d2c/autodiff.hpp"
#include "d2c/io.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace d2c {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class Dtype : std::uint8_t { f32 = 1, f64 = 2 };

struct Table {
  std::string name;
  Dtype dtype = Dtype::f64;
  std::vector<std::uint32_t> dims;
  std::vector<double> data;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  bool operator==(const Table&) const = default;
};

inline Table matrix_table(std::string name, const Matrix& m) {
  Table t{std::move(name), Dtype::f64, {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data.push_back(m(i, j));
  return t;
}

inline Table vector_table(std::string name, std::vector<double> values) {
  Table t{std::move(name), Dtype::f64, {static_cast<std::uint32_t>(values.size())}, std::move(values)};
  return t;
}

inline Matrix table_matrix(const Table& t) {
  require(t.dims.size() == 2, Errc::table_mismatch, "checkpoint", "table '" + t.name + "' is not a matrix");
  Matrix m(t.dims[0], t.dims[1]);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t.data[static_cast<std::size_t>(i * m.cols() + j)];
  return m;
}

class TableSet {
 public:
  void add(Table t) {
    require(find(t.name) == nullptr, Errc::table_mismatch, "checkpoint", "duplicate table '" + t.name + "'");
    require(t.data.size() == t.element_count(), Errc::table_mismatch, "checkpoint",
            "table '" + t.name + "' data does not match its dims");
    tables_.push_back(std::move(t));
  }

  const Table* find(std::string_view name) const {
    for (const auto& t : tables_)
      if (t.name == name) return &t;
    return nullptr;
  }

  const Table& at(std::string_view name) const {
    const Table* t = find(name);
    require(t != nullptr, Errc::table_mismatch, "checkpoint", "missing table '" + std::string(name) + "'");
    return *t;
  }

  /// Stores every parameter of `table` under "<group>/<param name>".
  void add_parameters(const std::string& group, const ad::ParameterTable& table) {
    for (const auto& p : table) add(matrix_table(group + "/" + p.name, p.value));
  }

  /// Restores parameters in place; names and shapes must match exactly.
  void restore_parameters(const std::string& group, ad::ParameterTable& table) const {
    std::size_t seen = 0;
    for (auto& p : table) {
      Matrix m = table_matrix(at(group + "/" + p.name));
      require(m.rows() == p.value.rows() && m.cols() == p.value.cols(), Errc::table_mismatch, "checkpoint",
              "shape of '" + group + "/" + p.name + "' differs from the model");
      p.value = std::move(m);
      ++seen;
    }
    std::size_t stored = 0;
    for (const auto& t : tables_)
      if (t.name.starts_with(group + "/")) ++stored;
    require(stored == seen, Errc::table_mismatch, "checkpoint", "group '" + group + "' has extra tables");
  }

  std::size_t size() const { return tables_.size(); }
  auto begin() const { return tables_.begin(); }
  auto end() const { return tables_.end(); }
  bool operator==(const TableSet&) const = default;

 private:
  std::vector<Table> tables_;
};

inline std::vector<std::uint8_t> serialize_tables(const TableSet& set) {
  io::ByteWriter w;
  w.str("D2C1");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(set.size()));
  for (const Table& t : set) {
    require(t.name.size() <= 0xffff, Errc::invalid_parameter, "checkpoint", "table name too long");
    require(t.dims.size() <= 0xff, Errc::invalid_parameter, "checkpoint", "table rank too large");
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.str(t.name);
    w.u8(static_cast<std::uint8_t>(t.dtype));
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (double v : t.data) {
      if (t.dtype == Dtype::f32)
        w.f32(static_cast<float>(v));
      else
        w.f64(v);
    }
  }
  w.seal();
  return w.take();
}

inline TableSet deserialize_tables(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "D2C1"), Errc::corrupt_checkpoint,
          "checkpoint", "bad magic");
  auto body = io::verify_crc(bytes, Errc::corrupt_checkpoint, "checkpoint");
  io::ByteReader r(body, Errc::corrupt_checkpoint, "checkpoint");
  r.str(4);
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, Errc::corrupt_checkpoint, "checkpoint",
          "unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  TableSet set;
  for (std::uint32_t k = 0; k < count; ++k) {
    Table t;
    t.name = r.str(r.u16());
    const std::uint8_t tag = r.u8();
    require(tag == 1 || tag == 2, Errc::corrupt_checkpoint, "checkpoint", "unknown dtype tag");
    t.dtype = static_cast<Dtype>(tag);
    const std::uint8_t rank = r.u8();
    for (std::uint8_t i = 0; i < rank; ++i) t.dims.push_back(r.u32());
    const std::size_t n = t.element_count();
    r.need(n * (t.dtype == Dtype::f32 ? 4 : 8));
    t.data.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.data.push_back(t.dtype == Dtype::f32 ? r.f32() : r.f64());
    require(set.find(t.name) == nullptr, Errc::corrupt_checkpoint, "checkpoint", "duplicate table " + t.name);
    set.add(std::move(t));
  }
  require(r.remaining() == 0, Errc::corrupt_checkpoint, "checkpoint", "trailing bytes after the last table");
  return set;
}

inline void save_tables(const std::filesystem::path& path, const TableSet& set) {
  io::write_file(path, serialize_tables(set));
}

inline TableSet load_tables(const std::filesystem::path& path) {
  return deserialize_tables(io::read_file(path));
}

}  // namespace d2c
