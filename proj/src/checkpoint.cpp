#include "kgcf/checkpoint.hpp"

#include <cstring>

#include "kgcf/error.hpp"
#include "kgcf/serialize.hpp"

namespace kgcf {

void CheckpointWriter::u32(std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  bytes_.append(buf, 4);
}

void CheckpointWriter::f32(double v) {
  const auto f = static_cast<float>(v);
  char buf[4];
  std::memcpy(buf, &f, 4);
  bytes_.append(buf, 4);
}

void CheckpointWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes_.append(s);
}

void CheckpointWriter::matrix(const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) f32(m(r, c));
  }
}

void CheckpointWriter::vector(const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) f32(v(i));
}

void CheckpointWriter::save(const std::filesystem::path& path) const {
  write_text_atomic(path, bytes_);
}

CheckpointReader::CheckpointReader(const std::filesystem::path& path)
    : path_(path.string()), bytes_(read_text(path)) {}

void CheckpointReader::need(std::size_t n) const {
  if (pos_ + n > bytes_.size()) throw LoadError("truncated checkpoint " + path_);
}

void CheckpointReader::expect_magic(std::string_view tag) {
  need(tag.size());
  if (std::string_view(bytes_).substr(pos_, tag.size()) != tag) {
    throw LoadError("not a " + std::string(tag) + " checkpoint: " + path_);
  }
  pos_ += tag.size();
}

std::uint32_t CheckpointReader::u32() {
  need(4);
  std::uint32_t v = 0;
  std::memcpy(&v, bytes_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

double CheckpointReader::f32() {
  need(4);
  float f = 0;
  std::memcpy(&f, bytes_.data() + pos_, 4);
  pos_ += 4;
  return f;
}

std::string CheckpointReader::str() {
  const auto n = u32();
  need(n);
  std::string s = bytes_.substr(pos_, n);
  pos_ += n;
  return s;
}

void CheckpointReader::matrix(Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f32();
  }
}

void CheckpointReader::vector(Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f32();
}

void CheckpointReader::finish() const {
  if (pos_ != bytes_.size()) throw LoadError("trailing bytes in checkpoint " + path_);
}

void round_to_float(Eigen::MatrixXd& m) {
  m = m.cast<float>().cast<double>();
}

void round_to_float(Eigen::VectorXd& v) {
  v = v.cast<float>().cast<double>();
}

}  // namespace kgcf
