#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "npgd/autograd.hpp"
#include "npgd/tensor.hpp"

namespace npgd {

enum class Arch { resnet, chain };
enum class Activation { relu, swish };
enum class Normalization { instance, none };

std::string to_string(Arch a);
std::string to_string(Activation a);
std::string to_string(Normalization n);
Arch parse_arch(std::string_view s);
Activation parse_activation(std::string_view s);
Normalization parse_normalization(std::string_view s);

struct ProximalConfig {
  Arch arch = Arch::resnet;
  int num_res_blocks = 1;
  int feature_maps = 32;
  int chain_layers = 2;
  int chain_kernel = 3;
  Activation activation = Activation::relu;
  Normalization normalization = Normalization::instance;

  // Throws ConfigError on an invalid combination.
  void validate() const;

  static ProximalConfig paper_resnet(int blocks);
  static ProximalConfig desk_chain();

  friend bool operator==(const ProximalConfig&, const ProximalConfig&) = default;
};

// Closed-form trainable parameter count of a configuration.
std::size_t parameter_count(const ProximalConfig& config);

// Activation gates D(z) of every gated layer, in forward order.
struct MaskSnapshot {
  Activation activation = Activation::relu;
  std::vector<std::string> layer_ids;
  std::vector<Tensor> masks;
  std::uint64_t input_digest = 0;

  std::size_t layers() const { return masks.size(); }
};

// FNV-1a over the raw float bits of an image.
std::uint64_t digest(const ComplexImage& x);

// Per-call control of the gated activations.
struct GateControl {
  // Replace every activation by multiplication with these masks.
  const MaskSnapshot* frozen = nullptr;
  // Record D(z) of every gated layer here.
  MaskSnapshot* capture = nullptr;
};

// Learned proximal map on two-channel (re, im) images.
//
// resnet: B residual blocks of [conv3x3 -> norm -> act -> conv3x3 -> norm ->
// act] with an additive skip (the 2-channel input of the first block is
// zero-extended to F channels on the skip path), then conv1x1 -> act ->
// conv1x1 -> act -> conv1x1 to 2 channels.
//
// chain: L-1 bias-carrying convolutions with no nonlinearity, then a final
// convolution to 2 channels followed by the activation.
class ProximalNet {
 public:
  ProximalNet() = default;
  static ProximalNet build(const ProximalConfig& config, std::uint64_t seed);

  const ProximalConfig& config() const { return config_; }
  std::vector<ag::Parameter>& parameters() { return params_; }
  const std::vector<ag::Parameter>& parameters() const { return params_; }
  ag::Parameter& parameter(std::string_view name);
  const ag::Parameter& parameter(std::string_view name) const;
  std::size_t parameter_count() const;
  // Number of gated layers K.
  std::size_t gated_layers() const;

  // Differentiable forward of a 2 x H x W variable.
  ag::Var forward(ag::Var x, const GateControl& gates = {});
  // Inference without gradient recording.
  ComplexImage forward(const ComplexImage& x, const GateControl& gates = {}) const;

  MaskSnapshot capture_masks(const ComplexImage& x) const;
  // Forward with all gates fixed to `masks`. Requires normalization none.
  ComplexImage frozen_forward(const ComplexImage& x, const MaskSnapshot& masks) const;

  void zero_grad();

 private:
  using Binder = std::function<ag::Var(const ag::Parameter&)>;
  ag::Var run(ag::Var x, const GateControl& gates, const Binder& bind) const;
  const ag::Parameter* find(std::string_view name) const;

  ProximalConfig config_;
  std::vector<ag::Parameter> params_;
};

// Adam moments aligned with Checkpoint::net parameters followed by alpha.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

struct Checkpoint {
  ProximalNet net;
  float alpha = 1.0f;
  // Free-form tagged metadata (unroll settings, seed, epoch, ...).
  std::map<std::string, std::string> meta;
  AdamState optimizer;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

// Layout: "NPGD", u16 version, u32 key count, (u16 len, key, u16 len, value)*,
// f32 alpha, u32 record count, (u16 name len, name, u8 rank, u32 dims[rank],
// f32 data)*, u32 CRC-32 of all preceding bytes. All integers little-endian.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace npgd
