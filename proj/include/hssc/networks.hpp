#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hssc/bottleneck.hpp"
#include "hssc/conv.hpp"
#include "hssc/layers.hpp"

namespace hssc {

enum class Variant { opt, se, conv3d };
enum class SePlacement { encoder_initial, encoder_all, encoder_and_generator };
enum class Conv3dPlacement { first_and_last, all };

std::string to_string(Variant v);
std::string to_string(SePlacement p);
std::string to_string(Conv3dPlacement p);
std::string to_string(EntropyModelKind k);
Variant parse_variant(const std::string& s);
SePlacement parse_se_placement(const std::string& s);
Conv3dPlacement parse_conv3d_placement(const std::string& s);
EntropyModelKind parse_entropy_model(const std::string& s);

// Full architectural description; E, G, P and D are a pure function of it.
struct ModelConfig {
  Variant variant = Variant::opt;
  Index bands = 8;
  double width_scale = 0.25;
  // 0 selects round(220 w).
  Index latent_channels = 0;
  // Only valid for the se / 3d variant respectively; unset means the
  // best-performing arm (encoder_and_generator / first_and_last).
  std::optional<SePlacement> se_placement;
  std::optional<Conv3dPlacement> conv3d_placement;
  Index se_reduction = 2;
  // Run E and G on each band as a one-band image; the latents of all bands
  // are stacked along the channel axis.
  bool band_by_band = false;
  EntropyModelKind entropy_model = EntropyModelKind::factorized;
  int support = kDefaultSupport;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  // max(1, round(full * w)), halves rounding away from zero.
  Index width(Index full) const;
  // Latent channels of one E pass.
  Index latent() const;
  // Channels of the latent tensor handed to P and D (bands x latent() in
  // band-by-band mode).
  Index latent_total() const;
  // Bands seen by one E pass.
  Index pass_bands() const { return band_by_band ? 1 : bands; }
  SePlacement se_arm() const;
  Conv3dPlacement conv3d_arm() const;

  // One key=value per line, fixed key order; parse(canonical()) == *this.
  std::string canonical() const;
  static ModelConfig parse(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

enum class Reshape {
  none,
  lift,       // [B, H, W] -> [1, B, H, W]
  flatten,    // [C, D, H, W] -> [C * D, H, W]
  unflatten,  // [C * D, H, W] -> [C, D, H, W]
  squeeze,    // [1, D, H, W] -> [D, H, W]
};

enum class Activation { none, relu, leaky };

// One row of the layer tables:
// before -> [norm_in] -> [se_in] -> conv -> after_conv -> [norm] -> [se]
// -> activation -> after.
struct BlockPlan {
  std::string id;
  Reshape before = Reshape::none;
  bool norm_in = false;
  bool se_in = false;
  ConvSpec conv;
  Reshape after_conv = Reshape::none;
  bool norm = false;
  bool se = false;
  Activation act = Activation::none;
  Reshape after = Reshape::none;
  Index depth = 1;  // spectral extent used by the reshapes

  // Channels at the norm / SE after the convolution.
  Index feature_channels() const;
};

struct EncoderPlan {
  std::vector<BlockPlan> blocks;
};

// head -> h0; h0 + ResidualStack(h0) -> up stages -> out.
struct GeneratorPlan {
  BlockPlan head;
  Index residual_channels = 0;
  int residual_blocks = 9;
  std::vector<BlockPlan> up;
  BlockPlan out;
};

// latent -> NN upsample -> concat with the image -> trunk -> logits.
struct DiscriminatorPlan {
  BlockPlan latent;
  Index upsample = 16;
  std::vector<BlockPlan> trunk;
};

EncoderPlan encoder_plan(const ModelConfig& config);
GeneratorPlan generator_plan(const ModelConfig& config);
DiscriminatorPlan discriminator_plan(const ModelConfig& config);

// Shape propagation without allocating any parameters.
Shape block_output_shape(const BlockPlan& plan, const Shape& input);
Shape encoder_output_shape(const ModelConfig& config, const Shape& image);
Shape generator_output_shape(const ModelConfig& config, const Shape& latent);
Shape discriminator_output_shape(const ModelConfig& config, const Shape& image);

Index block_parameter_count(const BlockPlan& plan, Index se_reduction);

struct ParameterCounts {
  Index encoder = 0;
  Index generator = 0;
  Index prior = 0;
  Index discriminator = 0;
  Index total() const { return encoder + generator + prior + discriminator; }
};
ParameterCounts parameter_counts(const ModelConfig& config);

// Layer stack built from a BlockPlan. Stateful: forward caches what the
// following backward needs.
template <typename Scalar>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const BlockPlan& plan, Index se_reduction, std::uint64_t seed);

  Tensor<Scalar> forward(const Tensor<Scalar>& x);
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out);

  void collect(ParamList<Scalar>& params);
  void set_trainable(bool on);
  // SE sites of this block (0, 1 or 2).
  std::vector<SEBlock<Scalar>*> se_blocks();

  const BlockPlan& plan() const { return plan_; }

  std::optional<ChannelNorm<Scalar>> norm_in;
  std::optional<SEBlock<Scalar>> se_in;
  Conv<Scalar> conv;
  std::optional<ChannelNorm<Scalar>> norm;
  std::optional<SEBlock<Scalar>> se;

 private:
  BlockPlan plan_;
  Shape input_shape_;
  Shape conv_out_shape_;
  Tensor<Scalar> pre_act_;
  Shape pre_act_shape_;
};

template <typename Scalar>
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const ModelConfig& config);

  // x [B, H, W] with H, W multiples of 16 -> [latent, H/16, W/16].
  Tensor<Scalar> forward(const Tensor<Scalar>& x);
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_y);

  void collect(ParamList<Scalar>& params);
  void set_trainable(bool on);
  std::vector<SEBlock<Scalar>*> se_blocks();

  std::vector<ConvBlock<Scalar>> blocks;

 private:
  Index bands_ = 0;
};

template <typename Scalar>
class Generator {
 public:
  Generator() = default;
  explicit Generator(const ModelConfig& config);

  // y [latent, h, w] -> [B, 16 h, 16 w].
  Tensor<Scalar> forward(const Tensor<Scalar>& y);
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_x);

  void collect(ParamList<Scalar>& params);
  void set_trainable(bool on);
  std::vector<SEBlock<Scalar>*> se_blocks();

  ConvBlock<Scalar> head;
  std::vector<ResidualBlock<Scalar>> residuals;
  std::vector<ConvBlock<Scalar>> up;
  ConvBlock<Scalar> out;

 private:
  Index latent_ = 0;
};

// Conditional patch discriminator. forward returns logits; probabilities
// are sigmoid(logits).
template <typename Scalar>
class Discriminator {
 public:
  Discriminator() = default;
  explicit Discriminator(const ModelConfig& config);

  // x [B, H, W], y [latent_total, H/16, W/16] -> logits [1, H/8, W/8].
  Tensor<Scalar> forward(const Tensor<Scalar>& x, const Tensor<Scalar>& y);
  Tensor<Scalar> probabilities(const Tensor<Scalar>& x, const Tensor<Scalar>& y);
  // Returns (dL/dx, dL/dy) given dL/dlogits.
  std::pair<Tensor<Scalar>, Tensor<Scalar>> backward(const Tensor<Scalar>& grad_logits);

  void collect(ParamList<Scalar>& params);
  void set_trainable(bool on);

  ConvBlock<Scalar> latent;
  std::vector<ConvBlock<Scalar>> trunk;

 private:
  Index upsample_ = 16;
  Index latent_features_ = 0;
  Index bands_ = 0;
};

// E, G, P and D of one configuration with a stable parameter registry.
template <typename Scalar>
class Model {
 public:
  Model() = default;
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // Band-by-band aware wrappers around E and G. With bands as channels the
  // backward calls use the cache of the last forward, which must have been
  // of the same input. In band-by-band mode they rerun each band's forward.
  Tensor<Scalar> encode(const Tensor<Scalar>& x);
  Tensor<Scalar> encode_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_y);
  Tensor<Scalar> generate(const Tensor<Scalar>& y);
  Tensor<Scalar> generate_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& grad_x);

  ParamList<Scalar> encoder_params();
  ParamList<Scalar> generator_params();
  ParamList<Scalar> prior_params();
  ParamList<Scalar> discriminator_params();
  // E, G, P, D in that order.
  ParamList<Scalar> parameters();
  std::vector<SEBlock<Scalar>*> se_blocks();

  Encoder<Scalar> encoder;
  Generator<Scalar> generator;
  EntropyBottleneck<Scalar> bottleneck;
  Discriminator<Scalar> discriminator;

 private:
  ModelConfig config_;
};

}  // namespace hssc
