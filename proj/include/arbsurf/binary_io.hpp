#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace arbsurf {

// Little-endian flat binary with a four-byte magic and a u32 version.
class BinaryWriter {
 public:
  BinaryWriter(std::string_view magic, std::uint32_t version);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(std::string_view s);
  // Shape header (rows, cols as u64) followed by column-major values.
  void matrix(const Eigen::MatrixXd& m);
  const std::string& bytes() const { return buf_; }
  void save(const std::string& path) const;

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  // Throws DataError on a magic mismatch or an unsupported version.
  BinaryReader(std::string bytes, std::string_view magic, std::uint32_t max_version);
  static BinaryReader load(const std::string& path, std::string_view magic, std::uint32_t max_version);
  std::uint32_t version() const { return version_; }
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  Eigen::MatrixXd matrix();
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  const char* take(std::size_t n);
  std::string buf_;
  std::size_t pos_ = 0;
  std::uint32_t version_ = 0;
};

}  // namespace arbsurf
