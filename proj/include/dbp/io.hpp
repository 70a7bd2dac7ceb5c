#pragma once

#include "dbp/tensor.hpp"

#include <string>

namespace dbp {

/// Flat binary tensor: magic "DBPTNSR1", rank, extents (u64 little-endian), then f64 little-endian payload.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);
std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::string& bytes);

/// 8-bit binary PGM of an (H, W) image mapped linearly from [lo, hi].
void write_pgm(const std::string& path, const Tensor& image, double lo, double hi);

/// Shortest decimal that round-trips.
std::string format_double(double v);

void write_file(const std::string& path, const std::string& bytes);

}  // namespace dbp
