#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "chipnet/common.hpp"
#include "chipnet/fixedpoint.hpp"
#include "chipnet/network.hpp"
#include "chipnet/tensor.hpp"

namespace chipnet {

// Tiny purpose-built binary containers keep the toolchain dependency-free
// and byte-auditable.
//
// CTEN tensor container:
//   magic "CTEN" | version u8 (=1) | dtype u8 (0 = f32, 1 = fixed)
//   if fixed: total_bits u8, fraction_bits u8
//   rank u8 | dims rank x u32 LE | payload row-major LE (f32 or i32 raw)
//
// CNW1 weight container:
//   magic "CNW1" | layer count u32 LE
//   per layer: name (u16 LE length + UTF-8) | kind u8 | dims 4 x u32 LE
//              total_bits u8 | fraction_bits u8
//              weights then biases, 4 bytes per value LE
//   kind: 0 conv encoder, 1 block dense, 2 block dilated, 3 output head,
//         4 activation-format marker (no payload, dims all zero).
//   total_bits = 0 marks float32 payloads; otherwise values are i32 raws
//   that must fit the declared signed bit width.

enum class CtenDtype : std::uint8_t { kFloat32 = 0, kFixed = 1 };

struct CtenTensor {
  CtenDtype dtype = CtenDtype::kFloat32;
  QFormat qformat;  // meaningful when dtype == kFixed
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;          // dtype == kFloat32
  std::vector<std::int32_t> raw;   // dtype == kFixed

  std::size_t element_count() const {
    std::size_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return n;
  }
};

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
inline void put_i32(std::vector<std::uint8_t>& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}
inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size, std::string what)
      : data_(data), size_(size), what_(std::move(what)) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    const std::uint8_t* p = take(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    const std::uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool at_end() const { return pos_ == size_; }
  void expect_end() const {
    if (!at_end()) throw MalformedDataError(what_ + ": trailing bytes");
  }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > size_) throw MalformedDataError(what_ + ": truncated");
    const std::uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace detail

inline std::vector<std::uint8_t> write_cten(const CtenTensor& t) {
  std::vector<std::uint8_t> out{'C', 'T', 'E', 'N'};
  out.push_back(1);  // version
  out.push_back(static_cast<std::uint8_t>(t.dtype));
  if (t.dtype == CtenDtype::kFixed) {
    t.qformat.validate();
    out.push_back(static_cast<std::uint8_t>(t.qformat.total_bits));
    out.push_back(static_cast<std::uint8_t>(t.qformat.fraction_bits));
  }
  if (t.dims.size() > 255) throw DomainError("write_cten: rank exceeds 255");
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  for (std::uint32_t d : t.dims) detail::put_u32(out, d);
  const std::size_t n = t.element_count();
  if (t.dtype == CtenDtype::kFloat32) {
    if (t.f32.size() != n) throw ShapeError("write_cten: payload does not match dims");
    for (float v : t.f32) detail::put_f32(out, v);
  } else {
    if (t.raw.size() != n) throw ShapeError("write_cten: payload does not match dims");
    for (std::int32_t v : t.raw) detail::put_i32(out, v);
  }
  return out;
}

inline CtenTensor read_cten(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes.data(), bytes.size(), "CTEN");
  if (r.str(4) != "CTEN") throw MalformedDataError("CTEN: bad magic");
  if (r.u8() != 1) throw MalformedDataError("CTEN: unsupported version");
  CtenTensor t;
  const std::uint8_t dtype = r.u8();
  if (dtype > 1) throw MalformedDataError("CTEN: unknown dtype code");
  t.dtype = static_cast<CtenDtype>(dtype);
  if (t.dtype == CtenDtype::kFixed) {
    t.qformat.total_bits = r.u8();
    t.qformat.fraction_bits = r.u8();
    t.qformat.validate();
  }
  const std::uint8_t rank = r.u8();
  t.dims.resize(rank);
  for (auto& d : t.dims) d = r.u32();
  const std::size_t n = t.element_count();
  if (t.dtype == CtenDtype::kFloat32) {
    t.f32.resize(n);
    for (auto& v : t.f32) v = r.f32();
  } else {
    t.raw.resize(n);
    for (auto& v : t.raw) v = r.i32();
  }
  r.expect_end();
  return t;
}

inline CtenTensor cten_from_tensor3(const Tensor3<float>& t) {
  CtenTensor c;
  c.dims = {static_cast<std::uint32_t>(t.rows), static_cast<std::uint32_t>(t.cols),
            static_cast<std::uint32_t>(t.channels)};
  c.f32 = t.v;
  return c;
}

inline Tensor3<float> tensor3_from_cten(const CtenTensor& c) {
  if (c.dims.size() != 3) throw MalformedDataError("CTEN: expected a rank-3 tensor");
  if (c.dtype != CtenDtype::kFloat32) throw MalformedDataError("CTEN: expected f32 payload");
  Tensor3<float> t(static_cast<int>(c.dims[0]), static_cast<int>(c.dims[1]),
                   static_cast<int>(c.dims[2]));
  t.v = c.f32;
  return t;
}

inline CtenTensor cten_from_labels(const Tensor2<std::uint8_t>& labels) {
  CtenTensor c;
  c.dims = {static_cast<std::uint32_t>(labels.rows), static_cast<std::uint32_t>(labels.cols)};
  c.f32.reserve(labels.v.size());
  for (auto v : labels.v) c.f32.push_back(v ? 1.0f : 0.0f);
  return c;
}

inline Tensor2<std::uint8_t> labels_from_cten(const CtenTensor& c) {
  if (c.dims.size() != 2) throw MalformedDataError("CTEN: expected a rank-2 label map");
  if (c.dtype != CtenDtype::kFloat32) throw MalformedDataError("CTEN: expected f32 payload");
  Tensor2<std::uint8_t> labels(static_cast<int>(c.dims[0]), static_cast<int>(c.dims[1]));
  for (std::size_t i = 0; i < c.f32.size(); ++i) labels.v[i] = c.f32[i] != 0.0f ? 1 : 0;
  return labels;
}

inline CtenTensor cten_from_probmap(const ProbMap& p) {
  CtenTensor c;
  c.dims = {static_cast<std::uint32_t>(p.rows), static_cast<std::uint32_t>(p.cols)};
  c.f32 = p.v;
  return c;
}

inline ProbMap probmap_from_cten(const CtenTensor& c) {
  if (c.dims.size() != 2) throw MalformedDataError("CTEN: expected a rank-2 map");
  if (c.dtype != CtenDtype::kFloat32) throw MalformedDataError("CTEN: expected f32 payload");
  ProbMap p(static_cast<int>(c.dims[0]), static_cast<int>(c.dims[1]));
  p.v = c.f32;
  return p;
}

// --- CNW1 -------------------------------------------------------------------

enum class CnwKind : std::uint8_t {
  kConv = 0,
  kBlockDense = 1,
  kBlockDilated = 2,
  kOutput = 3,
  kActivationMeta = 4,
};

struct CnwLayer {
  std::string name;
  CnwKind kind = CnwKind::kConv;
  std::uint32_t dims[4] = {0, 0, 0, 0};  // out, in, kh, kw
  std::uint8_t total_bits = 0;           // 0 marks float32 payload
  std::uint8_t fraction_bits = 0;
  std::vector<float> weights_f32, bias_f32;
  std::vector<std::int32_t> weights_raw, bias_raw;

  bool is_float() const { return total_bits == 0; }
};

struct CnwFile {
  std::vector<CnwLayer> layers;
};

namespace detail {

inline void check_raw_fits(const CnwLayer& layer) {
  const QFormat q{layer.total_bits, layer.fraction_bits};
  q.validate();
  const auto check = [&](const std::vector<std::int32_t>& raws) {
    for (std::int32_t v : raws)
      if (v < q.raw_min() || v > q.raw_max())
        throw MalformedDataError("CNW1: raw value out of the declared bit width in layer '" +
                                 layer.name + "'");
  };
  check(layer.weights_raw);
  check(layer.bias_raw);
}

}  // namespace detail

inline std::vector<std::uint8_t> write_cnw(const CnwFile& file) {
  std::vector<std::uint8_t> out{'C', 'N', 'W', '1'};
  detail::put_u32(out, static_cast<std::uint32_t>(file.layers.size()));
  for (const CnwLayer& layer : file.layers) {
    if (layer.name.size() > 0xffff) throw DomainError("write_cnw: layer name too long");
    detail::put_u16(out, static_cast<std::uint16_t>(layer.name.size()));
    out.insert(out.end(), layer.name.begin(), layer.name.end());
    out.push_back(static_cast<std::uint8_t>(layer.kind));
    for (std::uint32_t d : layer.dims) detail::put_u32(out, d);
    out.push_back(layer.total_bits);
    out.push_back(layer.fraction_bits);
    const std::size_t weight_count =
        static_cast<std::size_t>(layer.dims[0]) * layer.dims[1] * layer.dims[2] * layer.dims[3];
    const std::size_t bias_count = layer.kind == CnwKind::kActivationMeta ? 0 : layer.dims[0];
    if (layer.is_float()) {
      if (layer.weights_f32.size() != weight_count || layer.bias_f32.size() != bias_count)
        throw ShapeError("write_cnw: payload size mismatch in layer '" + layer.name + "'");
      for (float v : layer.weights_f32) detail::put_f32(out, v);
      for (float v : layer.bias_f32) detail::put_f32(out, v);
    } else {
      if (layer.weights_raw.size() != weight_count || layer.bias_raw.size() != bias_count)
        throw ShapeError("write_cnw: payload size mismatch in layer '" + layer.name + "'");
      detail::check_raw_fits(layer);
      for (std::int32_t v : layer.weights_raw) detail::put_i32(out, v);
      for (std::int32_t v : layer.bias_raw) detail::put_i32(out, v);
    }
  }
  return out;
}

inline CnwFile read_cnw(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes.data(), bytes.size(), "CNW1");
  if (r.str(4) != "CNW1") throw MalformedDataError("CNW1: bad magic");
  CnwFile file;
  const std::uint32_t count = r.u32();
  file.layers.resize(count);
  for (CnwLayer& layer : file.layers) {
    layer.name = r.str(r.u16());
    const std::uint8_t kind = r.u8();
    if (kind > 4) throw MalformedDataError("CNW1: unknown layer kind");
    layer.kind = static_cast<CnwKind>(kind);
    for (auto& d : layer.dims) d = r.u32();
    layer.total_bits = r.u8();
    layer.fraction_bits = r.u8();
    const std::size_t weight_count =
        static_cast<std::size_t>(layer.dims[0]) * layer.dims[1] * layer.dims[2] * layer.dims[3];
    const std::size_t bias_count = layer.kind == CnwKind::kActivationMeta ? 0 : layer.dims[0];
    if (layer.is_float()) {
      layer.weights_f32.resize(weight_count);
      for (auto& v : layer.weights_f32) v = r.f32();
      layer.bias_f32.resize(bias_count);
      for (auto& v : layer.bias_f32) v = r.f32();
    } else {
      layer.weights_raw.resize(weight_count);
      for (auto& v : layer.weights_raw) v = r.i32();
      layer.bias_raw.resize(bias_count);
      for (auto& v : layer.bias_raw) v = r.i32();
      detail::check_raw_fits(layer);
    }
  }
  r.expect_end();
  return file;
}

// --- Network <-> CNW1 --------------------------------------------------------

namespace detail {

inline CnwLayer float_layer(const std::string& name, CnwKind kind, const ConvParams& p) {
  CnwLayer layer;
  layer.name = name;
  layer.kind = kind;
  layer.dims[0] = static_cast<std::uint32_t>(p.out_ch);
  layer.dims[1] = static_cast<std::uint32_t>(p.in_ch);
  layer.dims[2] = static_cast<std::uint32_t>(p.kh);
  layer.dims[3] = static_cast<std::uint32_t>(p.kw);
  layer.weights_f32.assign(p.kernel.begin(), p.kernel.end());
  layer.bias_f32.assign(p.bias.begin(), p.bias.end());
  return layer;
}

inline CnwLayer fixed_layer(const std::string& name, CnwKind kind, const QuantizedConv& p,
                            const QFormat& q) {
  CnwLayer layer;
  layer.name = name;
  layer.kind = kind;
  layer.dims[0] = static_cast<std::uint32_t>(p.out_ch);
  layer.dims[1] = static_cast<std::uint32_t>(p.in_ch);
  layer.dims[2] = static_cast<std::uint32_t>(p.kh);
  layer.dims[3] = static_cast<std::uint32_t>(p.kw);
  layer.total_bits = static_cast<std::uint8_t>(q.total_bits);
  layer.fraction_bits = static_cast<std::uint8_t>(q.fraction_bits);
  // Stored in the canonical [o][i][kr][kc] order.
  layer.weights_raw.resize(p.kernel_raw.size());
  std::size_t idx = 0;
  for (int o = 0; o < p.out_ch; ++o)
    for (int i = 0; i < p.in_ch; ++i)
      for (int r = 0; r < p.kh; ++r)
        for (int c = 0; c < p.kw; ++c) layer.weights_raw[idx++] = p.at(o, i, r, c);
  layer.bias_raw = p.bias_raw;
  return layer;
}

inline ConvParams conv_from_float_layer(const CnwLayer& layer, int dilation) {
  ConvParams p(static_cast<int>(layer.dims[0]), static_cast<int>(layer.dims[1]),
               static_cast<int>(layer.dims[2]), static_cast<int>(layer.dims[3]), dilation);
  p.kernel.assign(layer.weights_f32.begin(), layer.weights_f32.end());
  p.bias.assign(layer.bias_f32.begin(), layer.bias_f32.end());
  return p;
}

inline ConvParams conv_from_fixed_layer(const CnwLayer& layer, int dilation) {
  const QFormat q{layer.total_bits, layer.fraction_bits};
  ConvParams p(static_cast<int>(layer.dims[0]), static_cast<int>(layer.dims[1]),
               static_cast<int>(layer.dims[2]), static_cast<int>(layer.dims[3]), dilation);
  for (std::size_t i = 0; i < layer.weights_raw.size(); ++i)
    p.kernel[i] = dequantize_raw(layer.weights_raw[i], q);
  for (std::size_t i = 0; i < layer.bias_raw.size(); ++i)
    p.bias[i] = dequantize_raw(layer.bias_raw[i], q);
  return p;
}

}  // namespace detail

inline CnwFile cnw_from_network(const Network& net) {
  net.validate();
  CnwFile file;
  file.layers.push_back(detail::float_layer("encoder", CnwKind::kConv, net.encoder));
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    const std::string base = "block" + std::to_string(i);
    file.layers.push_back(
        detail::float_layer(base + ".dense", CnwKind::kBlockDense, net.blocks[i].dense3));
    file.layers.push_back(
        detail::float_layer(base + ".dilated", CnwKind::kBlockDilated, net.blocks[i].dilated3));
  }
  file.layers.push_back(detail::float_layer("output", CnwKind::kOutput, net.output));
  return file;
}

inline CnwFile cnw_from_quantized_network(const QuantizedNetwork& net) {
  CnwFile file;
  const QFormat wq = net.weight_format;
  file.layers.push_back(detail::fixed_layer("encoder", CnwKind::kConv, net.encoder, wq));
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    const std::string base = "block" + std::to_string(i);
    file.layers.push_back(
        detail::fixed_layer(base + ".dense", CnwKind::kBlockDense, net.blocks[i].first, wq));
    file.layers.push_back(
        detail::fixed_layer(base + ".dilated", CnwKind::kBlockDilated, net.blocks[i].second, wq));
  }
  file.layers.push_back(detail::fixed_layer("output", CnwKind::kOutput, net.output, wq));
  CnwLayer meta;
  meta.name = "activations";
  meta.kind = CnwKind::kActivationMeta;
  meta.total_bits = static_cast<std::uint8_t>(net.act_format.total_bits);
  meta.fraction_bits = static_cast<std::uint8_t>(net.act_format.fraction_bits);
  file.layers.push_back(std::move(meta));
  return file;
}

struct LoadedWeights {
  Network network;        // master weights (dequantized if the file was fixed)
  bool fixed = false;
  QFormat weight_format;  // valid when fixed
  QFormat act_format;     // valid when fixed
};

namespace detail {

inline QuantizedConv quantized_conv_from_layer(const CnwLayer& layer, int dilation) {
  QuantizedConv conv;
  conv.out_ch = static_cast<int>(layer.dims[0]);
  conv.in_ch = static_cast<int>(layer.dims[1]);
  conv.kh = static_cast<int>(layer.dims[2]);
  conv.kw = static_cast<int>(layer.dims[3]);
  conv.dilation = dilation;
  conv.kernel_raw.resize(layer.weights_raw.size());
  std::size_t idx = 0;
  for (int o = 0; o < conv.out_ch; ++o)
    for (int i = 0; i < conv.in_ch; ++i)
      for (int r = 0; r < conv.kh; ++r)
        for (int c = 0; c < conv.kw; ++c)
          conv.kernel_raw[((static_cast<std::size_t>(o) * conv.kh + r) * conv.kw + c) *
                              conv.in_ch +
                          i] = layer.weights_raw[idx++];
  conv.bias_raw = layer.bias_raw;
  return conv;
}

}  // namespace detail

/// Rebuilds a QuantizedNetwork straight from the stored raw integers; no
/// float round-trip is involved.
inline QuantizedNetwork quantized_network_from_cnw(const CnwFile& file) {
  QuantizedNetwork net;
  bool have_encoder = false, have_output = false, have_act = false, have_weight_format = false;
  QuantizedConv pending_dense;
  bool have_dense = false;
  for (const CnwLayer& layer : file.layers) {
    if (layer.kind == CnwKind::kActivationMeta) {
      net.act_format = QFormat{layer.total_bits, layer.fraction_bits};
      net.act_format.validate();
      have_act = true;
      continue;
    }
    if (layer.is_float())
      throw ConfigError("CNW1: layer '" + layer.name + "' holds float weights, not fixed");
    const QFormat wq{layer.total_bits, layer.fraction_bits};
    wq.validate();
    if (have_weight_format && !(wq == net.weight_format))
      throw ConfigError("CNW1: layers quantized at differing formats");
    net.weight_format = wq;
    have_weight_format = true;
    const int dilation = layer.kind == CnwKind::kBlockDilated ? 2 : 1;
    QuantizedConv conv = detail::quantized_conv_from_layer(layer, dilation);
    switch (layer.kind) {
      case CnwKind::kConv:
        net.encoder = std::move(conv);
        have_encoder = true;
        break;
      case CnwKind::kBlockDense:
        if (have_dense) throw MalformedDataError("CNW1: dense branch without a dilated partner");
        pending_dense = std::move(conv);
        have_dense = true;
        break;
      case CnwKind::kBlockDilated:
        if (!have_dense) throw MalformedDataError("CNW1: dilated branch without a dense partner");
        net.blocks.emplace_back(std::move(pending_dense), std::move(conv));
        have_dense = false;
        break;
      case CnwKind::kOutput:
        net.output = std::move(conv);
        have_output = true;
        break;
      case CnwKind::kActivationMeta:
        break;
    }
  }
  if (!have_encoder || !have_output || have_dense)
    throw MalformedDataError("CNW1: incomplete network layer list");
  if (!have_act)
    throw ConfigError("CNW1: fixed weight file lacks the activation-format marker");
  net.accumulator_bits = detail::network_accumulator_bits(
      net.encoder.in_ch, net.encoder.out_ch, net.weight_format, net.act_format);
  if (net.accumulator_bits > 127) throw ConfigError("CNW1: accumulator budget exceeded");
  return net;
}

inline LoadedWeights network_from_cnw(const CnwFile& file) {
  LoadedWeights result;
  Network& net = result.network;
  bool have_encoder = false, have_output = false;
  ChipNetBlockParams pending;
  bool have_dense = false;
  for (const CnwLayer& layer : file.layers) {
    if (layer.kind == CnwKind::kActivationMeta) {
      result.act_format = QFormat{layer.total_bits, layer.fraction_bits};
      continue;
    }
    if (!layer.is_float()) {
      result.fixed = true;
      result.weight_format = QFormat{layer.total_bits, layer.fraction_bits};
    }
    const int dilation = layer.kind == CnwKind::kBlockDilated ? 2 : 1;
    ConvParams conv = layer.is_float() ? detail::conv_from_float_layer(layer, dilation)
                                       : detail::conv_from_fixed_layer(layer, dilation);
    switch (layer.kind) {
      case CnwKind::kConv:
        net.encoder = std::move(conv);
        have_encoder = true;
        break;
      case CnwKind::kBlockDense:
        if (have_dense) throw MalformedDataError("CNW1: dense branch without a dilated partner");
        pending.dense3 = std::move(conv);
        have_dense = true;
        break;
      case CnwKind::kBlockDilated:
        if (!have_dense) throw MalformedDataError("CNW1: dilated branch without a dense partner");
        pending.dilated3 = std::move(conv);
        net.blocks.push_back(std::move(pending));
        pending = ChipNetBlockParams();
        have_dense = false;
        break;
      case CnwKind::kOutput:
        net.output = std::move(conv);
        have_output = true;
        break;
      case CnwKind::kActivationMeta:
        break;
    }
  }
  if (!have_encoder || !have_output || have_dense)
    throw MalformedDataError("CNW1: incomplete network layer list");
  net.validate();
  return result;
}

// --- Filesystem helpers ------------------------------------------------------

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read error on " + path.string());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error on " + path.string());
}

inline void write_file_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << text;
  if (!out) throw IoError("write error on " + path.string());
}

}  // namespace chipnet
