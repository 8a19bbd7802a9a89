#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace kgcf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

/// Append-only binary buffer for checkpoint files. Matrices are written
/// row-major as 32-bit floats.
class CheckpointWriter {
 public:
  void magic(std::string_view tag) { bytes_.append(tag); }
  void u32(std::uint32_t v);
  void f32(double v);
  void str(std::string_view s);
  void matrix(const Eigen::MatrixXd& m);
  void vector(const Eigen::VectorXd& v);

  void save(const std::filesystem::path& path) const;
  [[nodiscard]] const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path);

  /// Throws LoadError if the next bytes are not `tag`.
  void expect_magic(std::string_view tag);
  std::uint32_t u32();
  double f32();
  std::string str();
  void matrix(Eigen::MatrixXd& m);  // m must already have its final shape
  void vector(Eigen::VectorXd& v);
  /// Throws LoadError on trailing bytes.
  void finish() const;

 private:
  void need(std::size_t n) const;

  std::string path_;
  std::string bytes_;
  std::size_t pos_ = 0;
};

/// Rounds every entry to the nearest float32 so in-memory models equal
/// their reloaded checkpoints bit for bit.
void round_to_float(Eigen::MatrixXd& m);
void round_to_float(Eigen::VectorXd& v);

}  // namespace kgcf
