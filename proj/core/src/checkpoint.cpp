#include "kdseq/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace kdseq {

namespace {

constexpr char kMagic[8] = {'K', 'D', 'S', 'Q', 'C', 'K', 'P', '1'};

void put_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; i++) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; i++) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw parse_error(path + ": truncated checkpoint");
  uint32_t v = 0;
  for (int i = 3; i >= 0; i--) v = (v << 8) | b[i];
  return v;
}

uint64_t get_u64(std::ifstream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw parse_error(path + ": truncated checkpoint");
  uint64_t v = 0;
  for (int i = 7; i >= 0; i--) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& header,
                     const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path);
  out.write(kMagic, 8);
  put_u32(out, static_cast<uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put_u32(out, static_cast<uint32_t>(params.count()));
  for (const auto& [name, t] : params) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, t.rows());
    put_u64(out, t.cols());
    // doubles are stored as their in-memory little-endian bytes
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  }
  if (!out) throw io_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw parse_error(path + ": not a checkpoint file");
  Checkpoint ck;
  uint32_t hlen = get_u32(in, path);
  ck.header.resize(hlen);
  if (hlen && !in.read(ck.header.data(), hlen)) throw parse_error(path + ": truncated checkpoint");
  uint32_t count = get_u32(in, path);
  for (uint32_t k = 0; k < count; k++) {
    uint32_t nlen = get_u32(in, path);
    std::string name(nlen, '\0');
    if (nlen && !in.read(name.data(), nlen)) throw parse_error(path + ": truncated checkpoint");
    uint64_t rows = get_u64(in, path);
    uint64_t cols = get_u64(in, path);
    std::vector<double> vals(rows * cols);
    if (!vals.empty() &&
        !in.read(reinterpret_cast<char*>(vals.data()),
                 static_cast<std::streamsize>(vals.size() * sizeof(double))))
      throw parse_error(path + ": truncated checkpoint");
    ck.params.add(name, Tensor(rows, cols, std::move(vals), true));
  }
  return ck;
}

uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
    if (in.eof()) break;
  }
  return h;
}

}  // namespace kdseq
