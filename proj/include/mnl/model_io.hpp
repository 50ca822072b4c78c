#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mnl/errors.hpp"
#include "mnl/network.hpp"

namespace mnl {

// Binary network format, version 1.  Little-endian throughout:
//   "MNL1"
//   u32 layer count
//   per layer: u32 fan_in, u32 fan_out, u8 activation tag, f64 alpha,
//              u8 dormant flag, fan_out mask bytes,
//              fan_out*fan_in f64 weights (row-major), fan_out f64 biases.
// Round-trips are bit-exact.

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& buf, double d) {
  auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return std::bit_cast<double>(v);
  }
  bool exhausted() const { return pos_ == size_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > size_) throw FormatError("model file truncated");
  }
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_network(const NetworkState& net) {
  std::string buf;
  buf += "MNL1";
  detail::put_u32(buf, static_cast<std::uint32_t>(net.layers.size()));
  for (const Layer& l : net.layers) {
    detail::put_u32(buf, static_cast<std::uint32_t>(l.fan_in));
    detail::put_u32(buf, static_cast<std::uint32_t>(l.fan_out));
    buf.push_back(static_cast<char>(l.activation));
    detail::put_f64(buf, l.alpha);
    buf.push_back(static_cast<char>(l.dormant ? 1 : 0));
    for (std::size_t r = 0; r < l.fan_out; ++r) buf.push_back(static_cast<char>(l.active[r] ? 1 : 0));
    for (double w : l.weights) detail::put_f64(buf, w);
    for (double b : l.bias) detail::put_f64(buf, b);
  }
  return buf;
}

inline NetworkState deserialize_network(const std::string& bytes) {
  detail::ByteReader rd(bytes.data(), bytes.size());
  char magic[4];
  for (char& c : magic) c = static_cast<char>(rd.u8());
  if (magic[0] != 'M' || magic[1] != 'N' || magic[2] != 'L')
    throw FormatError("not a network model file (bad magic)");
  if (magic[3] != '1')
    throw FormatError(std::string("unsupported model version '") + magic[3] +
                      "'; this build reads version '1'");

  const std::uint32_t layer_count = rd.u32();
  if (layer_count == 0 || layer_count > 1u << 20)
    throw FormatError("model file corrupt: implausible layer count");

  NetworkState net;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    Layer l;
    l.fan_in = rd.u32();
    l.fan_out = rd.u32();
    if (l.fan_in == 0 || l.fan_out == 0 || l.fan_in > 1u << 20 || l.fan_out > 1u << 20)
      throw FormatError("model file corrupt: implausible layer shape");
    const std::uint8_t tag = rd.u8();
    if (tag > static_cast<std::uint8_t>(Activation::PRelu))
      throw FormatError("model file corrupt: unknown activation tag");
    l.activation = static_cast<Activation>(tag);
    l.alpha = rd.f64();
    l.dormant = rd.u8() != 0;
    l.active.resize(l.fan_out);
    for (std::size_t r = 0; r < l.fan_out; ++r) l.active[r] = rd.u8() != 0 ? 1 : 0;
    l.weights.resize(l.fan_in * l.fan_out);
    for (double& w : l.weights) w = rd.f64();
    l.bias.resize(l.fan_out);
    for (double& b : l.bias) b = rd.f64();
    net.layers.push_back(std::move(l));
  }
  if (!rd.exhausted()) throw FormatError("model file has trailing bytes");

  net.input_dim = net.layers.front().fan_in;
  net.output_dim = net.layers.back().fan_out;
  validate(net);
  return net;
}

inline void save_network(const NetworkState& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file: " + path);
  const std::string bytes = serialize_network(net);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed while writing model file: " + path);
}

inline NetworkState load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_network(bytes);
}

}  // namespace mnl
