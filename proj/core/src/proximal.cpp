#include "npgd/proximal.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "npgd/error.hpp"
#include "npgd/rng.hpp"

namespace npgd {

std::string to_string(Arch a) { return a == Arch::resnet ? "resnet" : "chain"; }
std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "swish"; }
std::string to_string(Normalization n) { return n == Normalization::instance ? "instance" : "none"; }

Arch parse_arch(std::string_view s) {
  if (s == "resnet") return Arch::resnet;
  if (s == "chain") return Arch::chain;
  throw ConfigError("arch: unknown value '" + std::string(s) + "' (resnet|chain)");
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "swish") return Activation::swish;
  throw ConfigError("activation: unknown value '" + std::string(s) + "' (relu|swish)");
}

Normalization parse_normalization(std::string_view s) {
  if (s == "instance") return Normalization::instance;
  if (s == "none") return Normalization::none;
  throw ConfigError("normalization: unknown value '" + std::string(s) + "' (instance|none)");
}

void ProximalConfig::validate() const {
  if (arch == Arch::resnet) {
    if (num_res_blocks < 1) throw ConfigError("res_blocks: must be >= 1");
    if (feature_maps < 2) throw ConfigError("feature_maps: must be >= 2");
  } else {
    if (normalization != Normalization::none) throw ConfigError("normalization: chain arch requires none");
    if (chain_layers < 1) throw ConfigError("chain_layers: must be >= 1");
    if (chain_kernel < 1 || chain_kernel % 2 == 0) throw ConfigError("chain_kernel: must be a positive odd size");
    if (chain_layers > 1 && feature_maps < 1) throw ConfigError("feature_maps: must be >= 1");
  }
}

ProximalConfig ProximalConfig::paper_resnet(int blocks) {
  ProximalConfig c;
  c.num_res_blocks = blocks;
  c.feature_maps = 128;
  return c;
}

ProximalConfig ProximalConfig::desk_chain() {
  ProximalConfig c;
  c.arch = Arch::chain;
  c.chain_layers = 2;
  c.chain_kernel = 3;
  c.feature_maps = 16;
  c.activation = Activation::swish;
  c.normalization = Normalization::none;
  return c;
}

namespace {

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in;  // 0 for biases and affine terms
  float fill;
};

std::vector<ParamSpec> layout(const ProximalConfig& c) {
  std::vector<ParamSpec> specs;
  auto conv = [&](const std::string& prefix, std::size_t cin, std::size_t cout, std::size_t k) {
    specs.push_back({prefix + ".weight", {cout, cin, k, k}, cin * k * k, 0.0f});
    specs.push_back({prefix + ".bias", {cout}, 0, 0.0f});
  };
  auto norm = [&](const std::string& prefix, std::size_t ch) {
    if (c.normalization == Normalization::none) return;
    specs.push_back({prefix + ".gamma", {ch}, 0, 1.0f});
    specs.push_back({prefix + ".beta", {ch}, 0, 0.0f});
  };
  const auto f = std::size_t(c.feature_maps);
  if (c.arch == Arch::resnet) {
    for (int b = 0; b < c.num_res_blocks; ++b) {
      const std::string p = "rb" + std::to_string(b);
      conv(p + ".conv1", b == 0 ? 2 : f, f, 3);
      norm(p + ".norm1", f);
      conv(p + ".conv2", f, f, 3);
      norm(p + ".norm2", f);
    }
    conv("tail1", f, f, 1);
    conv("tail2", f, f, 1);
    conv("tail3", f, 2, 1);
  } else {
    const auto k = std::size_t(c.chain_kernel);
    for (int l = 0; l < c.chain_layers; ++l) {
      const std::size_t cin = l == 0 ? 2 : f;
      const std::size_t cout = l == c.chain_layers - 1 ? 2 : f;
      conv("chain" + std::to_string(l), cin, cout, k);
    }
  }
  return specs;
}

}  // namespace

std::size_t parameter_count(const ProximalConfig& config) {
  config.validate();
  const auto f = std::size_t(config.feature_maps);
  if (config.arch == Arch::resnet) {
    const std::size_t norm = config.normalization == Normalization::instance ? 4 * f : 0;
    const std::size_t first = (2 * f * 9 + f) + (f * f * 9 + f) + norm;
    const std::size_t rest = 2 * (f * f * 9 + f) + norm;
    const std::size_t tail = 2 * (f * f + f) + (2 * f + 2);
    return first + std::size_t(config.num_res_blocks - 1) * rest + tail;
  }
  const auto k2 = std::size_t(config.chain_kernel * config.chain_kernel);
  const auto layers = std::size_t(config.chain_layers);
  if (layers == 1) return 2 * 2 * k2 + 2;
  return (2 * f * k2 + f) + (layers - 2) * (f * f * k2 + f) + (f * 2 * k2 + 2);
}

std::uint64_t digest(const ComplexImage& x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (float v : x.planes().data()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int k = 0; k < 4; ++k) {
      h ^= (bits >> (8 * k)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

ProximalNet ProximalNet::build(const ProximalConfig& config, std::uint64_t seed) {
  config.validate();
  ProximalNet net;
  net.config_ = config;
  Xorshift64Star rng(seed);
  for (const auto& spec : layout(config)) {
    Tensor t(spec.shape, spec.fill);
    if (spec.fan_in > 0) {
      const double sd = std::sqrt(2.0 / double(spec.fan_in));
      for (auto& v : t.data()) v = float(sd * rng.normal());
    }
    net.params_.emplace_back(spec.name, std::move(t));
  }
  return net;
}

const ag::Parameter* ProximalNet::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

ag::Parameter& ProximalNet::parameter(std::string_view name) {
  return const_cast<ag::Parameter&>(std::as_const(*this).parameter(name));
}

const ag::Parameter& ProximalNet::parameter(std::string_view name) const {
  const auto* p = find(name);
  if (!p) throw ContractError("no parameter named '" + std::string(name) + "'");
  return *p;
}

std::size_t ProximalNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::size_t ProximalNet::gated_layers() const {
  return config_.arch == Arch::resnet ? std::size_t(2 * config_.num_res_blocks + 2) : 1;
}

void ProximalNet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

ag::Var ProximalNet::run(ag::Var x, const GateControl& gates, const Binder& bind) const {
  if (x.value().rank() != 3 || x.value().dim(0) != 2) {
    throw ShapeError("proximal net expects a 2 x H x W input, got " + shape_string(x.shape()));
  }
  if (gates.frozen && config_.normalization != Normalization::none) {
    throw UnsupportedConfigError("frozen-mask evaluation requires normalization=none");
  }
  if (gates.capture) {
    gates.capture->activation = config_.activation;
    gates.capture->layer_ids.clear();
    gates.capture->masks.clear();
  }

  std::size_t layer = 0;
  auto conv = [&](const std::string& prefix, ag::Var h, int pad) {
    return ag::conv2d(h, bind(parameter(prefix + ".weight")), bind(parameter(prefix + ".bias")), 1, pad);
  };
  auto norm = [&](const std::string& prefix, ag::Var h) {
    if (config_.normalization == Normalization::none) return h;
    return ag::instance_norm(h, bind(parameter(prefix + ".gamma")), bind(parameter(prefix + ".beta")));
  };
  auto gate = [&](ag::Var z, const std::string& id) {
    if (gates.capture) {
      const Tensor& zv = z.value();
      Tensor d(zv.shape());
      for (std::size_t i = 0; i < zv.size(); ++i) {
        d[i] = config_.activation == Activation::relu ? (zv[i] > 0.0f ? 1.0f : 0.0f)
                                                      : 1.0f / (1.0f + std::exp(-zv[i]));
      }
      gates.capture->layer_ids.push_back(id);
      gates.capture->masks.push_back(std::move(d));
    }
    ag::Var out;
    if (gates.frozen) {
      if (layer >= gates.frozen->masks.size() || gates.frozen->masks[layer].shape() != z.value().shape()) {
        throw ContractError("mask snapshot does not match the network at layer " + id);
      }
      out = ag::gate(z, gates.frozen->masks[layer]);
    } else {
      out = config_.activation == Activation::relu ? ag::relu(z) : ag::swish(z);
    }
    ++layer;
    return out;
  };

  ag::Var h = x;
  const auto f = std::size_t(config_.feature_maps);
  if (config_.arch == Arch::resnet) {
    for (int b = 0; b < config_.num_res_blocks; ++b) {
      const std::string p = "rb" + std::to_string(b);
      const ag::Var u = gate(norm(p + ".norm1", conv(p + ".conv1", h, 1)), p + ".act1");
      const ag::Var v = gate(norm(p + ".norm2", conv(p + ".conv2", u, 1)), p + ".act2");
      const ag::Var skip = h.value().dim(0) == f ? h : ag::pad_channels(h, f);
      h = ag::add(skip, v);
    }
    h = gate(conv("tail1", h, 0), "tail1.act");
    h = gate(conv("tail2", h, 0), "tail2.act");
    h = conv("tail3", h, 0);
  } else {
    const int pad = config_.chain_kernel / 2;
    for (int l = 0; l < config_.chain_layers; ++l) {
      const std::string p = "chain" + std::to_string(l);
      h = conv(p, h, pad);
      if (l == config_.chain_layers - 1) h = gate(h, p + ".act");
    }
  }
  if (gates.frozen && layer != gates.frozen->masks.size()) {
    throw ContractError("mask snapshot has a different number of gated layers than the network");
  }
  return h;
}

ag::Var ProximalNet::forward(ag::Var x, const GateControl& gates) {
  ag::Tape& tape = *x.tape();
  return run(x, gates, [&tape](const ag::Parameter& p) { return tape.parameter(const_cast<ag::Parameter&>(p)); });
}

ComplexImage ProximalNet::forward(const ComplexImage& x, const GateControl& gates) const {
  ag::Tape tape(false);
  const ag::Var out =
      run(tape.constant(x.planes()), gates, [&tape](const ag::Parameter& p) { return tape.constant(p.value); });
  return ComplexImage(out.value());
}

MaskSnapshot ProximalNet::capture_masks(const ComplexImage& x) const {
  MaskSnapshot snap;
  GateControl g;
  g.capture = &snap;
  forward(x, g);
  snap.input_digest = digest(x);
  return snap;
}

ComplexImage ProximalNet::frozen_forward(const ComplexImage& x, const MaskSnapshot& masks) const {
  GateControl g;
  g.frozen = &masks;
  return forward(x, g);
}

// --- checkpoint ------------------------------------------------------------

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(char(v)); }
  void u16(std::uint16_t v) {
    for (int k = 0; k < 2; ++k) buf_.push_back(char((v >> (8 * k)) & 0xFF));
  }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buf_.push_back(char((v >> (8 * k)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str16(const std::string& s) {
    if (s.size() > 0xFFFF) throw ContractError("checkpoint string too long");
    u16(std::uint16_t(s.size()));
    buf_ += s;
  }
  void bytes(std::string_view s) { buf_ += s; }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  std::uint8_t u8() { return std::uint8_t(take(1)[0]); }
  std::uint16_t u16() {
    const auto s = take(2);
    return std::uint16_t(std::uint8_t(s[0]) | (std::uint8_t(s[1]) << 8));
  }
  std::uint32_t u32() {
    const auto s = take(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t(std::uint8_t(s[k])) << (8 * k);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str16() { return std::string(take(u16())); }
  std::string_view take(std::size_t n) {
    if (pos_ + n > b_.size()) throw CorruptionError("checkpoint truncated");
    const auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::string_view b_;
  std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const std::string& name, const Tensor& t) {
  w.str16(name);
  w.u8(std::uint8_t(t.rank()));
  for (auto d : t.shape()) w.u32(std::uint32_t(d));
  for (float v : t.data()) w.f32(v);
}

std::uint32_t crc32_of(std::string_view s) {
  return std::uint32_t(::crc32(0L, reinterpret_cast<const Bytef*>(s.data()), uInt(s.size())));
}

std::map<std::string, std::string> config_block(const Checkpoint& c) {
  std::map<std::string, std::string> kv = c.meta;
  const auto& pc = c.net.config();
  kv["net.arch"] = to_string(pc.arch);
  kv["net.res_blocks"] = std::to_string(pc.num_res_blocks);
  kv["net.feature_maps"] = std::to_string(pc.feature_maps);
  kv["net.chain_layers"] = std::to_string(pc.chain_layers);
  kv["net.chain_kernel"] = std::to_string(pc.chain_kernel);
  kv["net.activation"] = to_string(pc.activation);
  kv["net.normalization"] = to_string(pc.normalization);
  kv["adam.step"] = std::to_string(c.optimizer.step);
  return kv;
}

int parse_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("checkpoint lacks config key " + key);
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw FormatError("checkpoint config key " + key + " is not an integer");
  }
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("checkpoint lacks config key " + key);
  return it->second;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes("NPGD");
  w.u16(kCheckpointVersion);
  const auto kv = config_block(ckpt);
  w.u32(std::uint32_t(kv.size()));
  for (const auto& [k, v] : kv) {
    w.str16(k);
    w.str16(v);
  }
  w.f32(ckpt.alpha);

  const auto& params = ckpt.net.parameters();
  const std::size_t slots = params.size() + 1;
  const bool has_moments = !ckpt.optimizer.m.empty();
  if (has_moments && (ckpt.optimizer.m.size() != slots || ckpt.optimizer.v.size() != slots)) {
    throw ContractError("optimizer state does not match the parameter list");
  }
  w.u32(std::uint32_t(params.size() + (has_moments ? 2 * slots : 0)));
  for (const auto& p : params) write_tensor(w, p.name, p.value);
  if (has_moments) {
    for (std::size_t i = 0; i < slots; ++i) {
      const std::string name = i < params.size() ? params[i].name : "alpha";
      write_tensor(w, "adam.m/" + name, ckpt.optimizer.m[i]);
      write_tensor(w, "adam.v/" + name, ckpt.optimizer.v[i]);
    }
  }
  w.u32(crc32_of(w.buffer()));
  return std::move(w.buffer());
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 6) throw CorruptionError("checkpoint truncated");
  if (bytes.substr(0, 4) != "NPGD") throw FormatError("not a checkpoint file (bad magic)");
  Reader hdr(bytes.substr(4, 2));
  const auto version = hdr.u16();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  if (bytes.size() < 10) throw CorruptionError("checkpoint truncated");
  const auto body = bytes.substr(0, bytes.size() - 4);
  Reader tail(bytes.substr(bytes.size() - 4));
  if (tail.u32() != crc32_of(body)) throw CorruptionError("checkpoint checksum mismatch");

  Reader r(body.substr(6));
  std::map<std::string, std::string> kv;
  const auto nkv = r.u32();
  for (std::uint32_t i = 0; i < nkv; ++i) {
    std::string k = r.str16();
    kv[k] = r.str16();
  }
  ProximalConfig pc;
  pc.arch = parse_arch(need(kv, "net.arch"));
  pc.num_res_blocks = parse_int(kv, "net.res_blocks");
  pc.feature_maps = parse_int(kv, "net.feature_maps");
  pc.chain_layers = parse_int(kv, "net.chain_layers");
  pc.chain_kernel = parse_int(kv, "net.chain_kernel");
  pc.activation = parse_activation(need(kv, "net.activation"));
  pc.normalization = parse_normalization(need(kv, "net.normalization"));

  Checkpoint ck;
  ck.net = ProximalNet::build(pc, 0);
  ck.alpha = r.f32();
  ck.optimizer.step = std::stoull(need(kv, "adam.step"));
  for (auto it = kv.begin(); it != kv.end();) {
    if (it->first.starts_with("net.") || it->first == "adam.step") it = kv.erase(it);
    else ++it;
  }
  ck.meta = std::move(kv);

  std::map<std::string, Tensor> records;
  const auto nrec = r.u32();
  for (std::uint32_t i = 0; i < nrec; ++i) {
    std::string name = r.str16();
    const auto rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape_size(shape) > bytes.size()) throw CorruptionError("checkpoint record size is implausible");
    std::vector<float> data(shape_size(shape));
    for (auto& v : data) v = r.f32();
    records.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw CorruptionError("trailing bytes in checkpoint");

  auto& params = ck.net.parameters();
  for (auto& p : params) {
    const auto it = records.find(p.name);
    if (it == records.end()) throw FormatError("checkpoint lacks parameter " + p.name);
    if (it->second.shape() != p.value.shape()) throw FormatError("checkpoint parameter " + p.name + " has wrong shape");
    p.value = it->second;
  }
  if (records.contains("adam.m/alpha")) {
    for (std::size_t i = 0; i <= params.size(); ++i) {
      const std::string name = i < params.size() ? params[i].name : "alpha";
      const auto m = records.find("adam.m/" + name), v = records.find("adam.v/" + name);
      if (m == records.end() || v == records.end()) throw FormatError("checkpoint optimizer state incomplete");
      ck.optimizer.m.push_back(m->second);
      ck.optimizer.v.push_back(v->second);
    }
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(bytes.data(), std::streamsize(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace npgd
