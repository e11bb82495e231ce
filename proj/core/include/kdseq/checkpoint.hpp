#pragma once

#include "kdseq/tensor.hpp"

namespace kdseq {

// Binary parameter container, versioned by magic. Layout (little-endian):
//   "KDSQCKP1"
//   u32 header length, header bytes (callers store a JSON config blob)
//   u32 parameter count, then per parameter:
//     u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64 values
// Raw 64-bit storage makes save/load round-trips bit-exact.
void save_checkpoint(const std::string& path, const std::string& header,
                     const ParameterSet& params);

struct Checkpoint {
  std::string header;
  ParameterSet params;
};

Checkpoint load_checkpoint(const std::string& path);

uint64_t file_hash(const std::string& path);  // fnv1a64 over the raw bytes

}  // namespace kdseq
