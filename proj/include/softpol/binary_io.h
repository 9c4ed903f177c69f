#pragma once

// Little-endian primitives and the dense matrix file format shared by
// beta.bin, contexts_*.bin and serialized policy parameters:
//
//   bytes 0..7   magic "SPMATF64"
//   bytes 8..11  rows (uint32 LE)
//   bytes 12..15 cols (uint32 LE)
//   then rows*cols float64 LE, row-major

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>

#include "softpol/core.h"

namespace softpol::io {

inline constexpr std::string_view kMatrixMagic = "SPMATF64";

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);

void write_matrix(std::ostream& out, const Eigen::Ref<const RowMatrix>& m);
RowMatrix read_matrix(std::istream& in);
void write_matrix_file(const std::filesystem::path& path, const Eigen::Ref<const RowMatrix>& m);
RowMatrix read_matrix_file(const std::filesystem::path& path);

// 64-bit FNV-1a, used for provenance hashes.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes);
  void update(std::string_view s);
  void update_u64(std::uint64_t v);
  void update_f64(double v);
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::uint64_t hash_matrix(const Eigen::Ref<const RowMatrix>& m);
std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace softpol::io
