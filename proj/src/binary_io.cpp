#include "arbsurf/binary_io.hpp"

#include <bit>
#include <cstring>

#include "arbsurf/errors.hpp"
#include "arbsurf/market_data.hpp"

namespace arbsurf {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

template <class T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

}  // namespace

BinaryWriter::BinaryWriter(std::string_view magic, std::uint32_t version) {
  if (magic.size() != 4) throw std::invalid_argument("binary magic must be four bytes");
  buf_.append(magic);
  u32(version);
}

void BinaryWriter::u32(std::uint32_t v) { put(buf_, v); }
void BinaryWriter::u64(std::uint64_t v) { put(buf_, v); }
void BinaryWriter::f64(double v) { put(buf_, v); }

void BinaryWriter::str(std::string_view s) {
  u64(s.size());
  buf_.append(s);
}

void BinaryWriter::matrix(const Eigen::MatrixXd& m) {
  u64(static_cast<std::uint64_t>(m.rows()));
  u64(static_cast<std::uint64_t>(m.cols()));
  buf_.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
}

void BinaryWriter::save(const std::string& path) const { write_text_file(path, buf_); }

BinaryReader::BinaryReader(std::string bytes, std::string_view magic, std::uint32_t max_version)
    : buf_(std::move(bytes)) {
  if (buf_.size() < 8 || std::string_view(buf_).substr(0, 4) != magic)
    throw DataError("not a " + std::string(magic) + " file");
  pos_ = 4;
  version_ = u32();
  if (version_ == 0 || version_ > max_version)
    throw DataError(std::string(magic) + " version " + std::to_string(version_) + " is not supported");
}

BinaryReader BinaryReader::load(const std::string& path, std::string_view magic, std::uint32_t max_version) {
  return BinaryReader(read_text_file(path), magic, max_version);
}

const char* BinaryReader::take(std::size_t n) {
  if (buf_.size() - pos_ < n) throw DataError("truncated binary file");
  const char* p = buf_.data() + pos_;
  pos_ += n;
  return p;
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  std::memcpy(&v, take(sizeof v), sizeof v);
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  std::memcpy(&v, take(sizeof v), sizeof v);
  return v;
}

double BinaryReader::f64() {
  double v;
  std::memcpy(&v, take(sizeof v), sizeof v);
  return v;
}

std::string BinaryReader::str() {
  std::uint64_t n = u64();
  if (n > buf_.size()) throw DataError("truncated binary file");
  return std::string(take(n), n);
}

Eigen::MatrixXd BinaryReader::matrix() {
  std::uint64_t r = u64(), c = u64();
  if (r > kMaxElements || c > kMaxElements || r * c > kMaxElements) throw DataError("implausible matrix shape");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  std::memcpy(m.data(), take(sizeof(double) * r * c), sizeof(double) * r * c);
  return m;
}

}  // namespace arbsurf
