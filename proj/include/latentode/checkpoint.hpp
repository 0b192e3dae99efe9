#ifndef LATENTODE_CHECKPOINT_HPP
#define LATENTODE_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "latentode/dataset.hpp"
#include "latentode/optim.hpp"
#include "latentode/tensor.hpp"

namespace latentode {

// Binary layout, little-endian throughout:
//   magic "LODE" | u32 version | config json | epoch | adam hyper + t |
//   rng state | param tensors | adam m tensors | adam v tensors | u32 crc32
// Tensor encoding: u16 name length, name bytes, u8 rank, u64 dims, f64 data.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string config_json;  // resolved run config as structured text
  long long epoch = 0;
  ParamSet params;
  AdamState adam;
  std::string rng_state;
};

namespace detail {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
  static const auto table = [] {
    std::vector<std::uint32_t> t(256);
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

struct ByteWriter {
  std::vector<std::uint8_t> buf;
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
};

struct ByteReader {
  const std::uint8_t* p;
  std::size_t len;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > len) throw IoError("checkpoint: truncated file");
  }
  std::uint8_t u8() {
    need(1);
    return p[pos++];
  }
  std::uint16_t u16() {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(u8()) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    std::size_t n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(p + pos), n);
    pos += n;
    return s;
  }
};

inline void write_param_set(ByteWriter& w, const ParamSet& ps) {
  w.u32(static_cast<std::uint32_t>(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string& name = ps.name(i);
    const Tensor& t = ps.tensor(i);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f64(v);
  }
}

inline ParamSet read_param_set(ByteReader& r) {
  ParamSet ps;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint16_t name_len = r.u16();
    r.need(name_len);
    std::string name(reinterpret_cast<const char*>(r.p + r.pos), name_len);
    r.pos += name_len;
    Shape shape(r.u8());
    for (auto& d : shape) d = r.u64();
    std::vector<double> vals(shape_numel(shape));
    for (auto& v : vals) v = r.f64();
    ps.add(name, Tensor(std::move(shape), std::move(vals)));
  }
  return ps;
}

}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.raw("LODE", 4);
  w.u32(ckpt.version);
  w.str(ckpt.config_json);
  w.u64(static_cast<std::uint64_t>(ckpt.epoch));
  w.f64(ckpt.adam.lr);
  w.f64(ckpt.adam.beta1);
  w.f64(ckpt.adam.beta2);
  w.f64(ckpt.adam.eps);
  w.u64(static_cast<std::uint64_t>(ckpt.adam.t));
  w.str(ckpt.rng_state);
  detail::write_param_set(w, ckpt.params);
  detail::write_param_set(w, ckpt.adam.m);
  detail::write_param_set(w, ckpt.adam.v);
  w.u32(detail::crc32(w.buf.data(), w.buf.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(w.buf.data()),
            static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw IoError("save_checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open '" + path + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 12) throw IoError("load_checkpoint: file too short");

  const std::uint32_t stored_crc = static_cast<std::uint32_t>(buf[buf.size() - 4]) |
                                   static_cast<std::uint32_t>(buf[buf.size() - 3]) << 8 |
                                   static_cast<std::uint32_t>(buf[buf.size() - 2]) << 16 |
                                   static_cast<std::uint32_t>(buf[buf.size() - 1]) << 24;
  if (detail::crc32(buf.data(), buf.size() - 4) != stored_crc)
    throw IoError("load_checkpoint: checksum mismatch, file is corrupt");

  detail::ByteReader r{buf.data(), buf.size() - 4};
  char magic[4];
  r.need(4);
  std::memcpy(magic, r.p, 4);
  r.pos += 4;
  if (std::memcmp(magic, "LODE", 4) != 0)
    throw IoError("load_checkpoint: bad magic, not a checkpoint file");

  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion)
    throw IoError("load_checkpoint: unsupported version " + std::to_string(ckpt.version) +
                  " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  ckpt.config_json = r.str();
  ckpt.epoch = static_cast<long long>(r.u64());
  ckpt.adam.lr = r.f64();
  ckpt.adam.beta1 = r.f64();
  ckpt.adam.beta2 = r.f64();
  ckpt.adam.eps = r.f64();
  ckpt.adam.t = static_cast<long long>(r.u64());
  ckpt.rng_state = r.str();
  ckpt.params = detail::read_param_set(r);
  ckpt.adam.m = detail::read_param_set(r);
  ckpt.adam.v = detail::read_param_set(r);
  return ckpt;
}

}  // namespace latentode

#endif  // LATENTODE_CHECKPOINT_HPP
