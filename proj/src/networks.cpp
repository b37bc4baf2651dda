#include "hssc/networks.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace hssc {

// ------------------------------------------------------------------ config

std::string to_string(Variant v) {
  switch (v) {
    case Variant::opt: return "opt";
    case Variant::se: return "se";
    case Variant::conv3d: return "3d";
  }
  return "?";
}

std::string to_string(SePlacement p) {
  switch (p) {
    case SePlacement::encoder_initial: return "encoder_initial";
    case SePlacement::encoder_all: return "encoder_all";
    case SePlacement::encoder_and_generator: return "encoder_and_generator";
  }
  return "?";
}

std::string to_string(Conv3dPlacement p) {
  return p == Conv3dPlacement::all ? "all" : "first_and_last";
}

std::string to_string(EntropyModelKind k) {
  return k == EntropyModelKind::hyperprior ? "hyperprior" : "factorized";
}

Variant parse_variant(const std::string& s) {
  if (s == "opt") return Variant::opt;
  if (s == "se") return Variant::se;
  if (s == "3d") return Variant::conv3d;
  throw std::invalid_argument("unknown variant '" + s + "' (expected opt, se or 3d)");
}

SePlacement parse_se_placement(const std::string& s) {
  if (s == "encoder_initial") return SePlacement::encoder_initial;
  if (s == "encoder_all") return SePlacement::encoder_all;
  if (s == "encoder_and_generator") return SePlacement::encoder_and_generator;
  throw std::invalid_argument("unknown se_placement '" + s + "'");
}

Conv3dPlacement parse_conv3d_placement(const std::string& s) {
  if (s == "first_and_last") return Conv3dPlacement::first_and_last;
  if (s == "all") return Conv3dPlacement::all;
  throw std::invalid_argument("unknown conv3d_placement '" + s + "'");
}

EntropyModelKind parse_entropy_model(const std::string& s) {
  if (s == "factorized") return EntropyModelKind::factorized;
  if (s == "hyperprior") return EntropyModelKind::hyperprior;
  throw std::invalid_argument("unknown entropy_model '" + s + "'");
}

void ModelConfig::validate() const {
  if (bands < 1) throw std::invalid_argument("config: bands must be >= 1");
  if (!(width_scale > 0.0 && width_scale <= 1.0)) {
    throw std::invalid_argument("config: width_scale must be in (0, 1]");
  }
  if (latent_channels < 0) throw std::invalid_argument("config: latent_channels must be >= 0");
  if (se_reduction < 1) throw std::invalid_argument("config: se_reduction must be >= 1");
  if (support < 1) throw std::invalid_argument("config: support must be >= 1");
  if (se_placement && variant != Variant::se) {
    throw std::invalid_argument("config: se_placement is only valid for the se variant");
  }
  if (conv3d_placement && variant != Variant::conv3d) {
    throw std::invalid_argument("config: conv3d_placement is only valid for the 3d variant");
  }
}

Index ModelConfig::width(Index full) const {
  return std::max<Index>(1, std::lround(static_cast<double>(full) * width_scale));
}

Index ModelConfig::latent() const {
  return latent_channels > 0 ? latent_channels : width(220);
}

Index ModelConfig::latent_total() const { return band_by_band ? bands * latent() : latent(); }

SePlacement ModelConfig::se_arm() const {
  return se_placement.value_or(SePlacement::encoder_and_generator);
}

Conv3dPlacement ModelConfig::conv3d_arm() const {
  return conv3d_placement.value_or(Conv3dPlacement::first_and_last);
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "variant=" << to_string(variant) << "\n"
     << "bands=" << bands << "\n"
     << "width_scale=" << width_scale << "\n"
     << "latent_channels=" << latent_channels << "\n"
     << "se_placement=" << (se_placement ? to_string(*se_placement) : "default") << "\n"
     << "conv3d_placement=" << (conv3d_placement ? to_string(*conv3d_placement) : "default")
     << "\n"
     << "se_reduction=" << se_reduction << "\n"
     << "band_by_band=" << (band_by_band ? 1 : 0) << "\n"
     << "entropy_model=" << to_string(entropy_model) << "\n"
     << "support=" << support << "\n"
     << "seed=" << seed << "\n";
  return os.str();
}

ModelConfig ModelConfig::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument(std::string("config: missing key ") + key);
    return it->second;
  };
  ModelConfig c;
  c.variant = parse_variant(get("variant"));
  c.bands = std::stoll(get("bands"));
  c.width_scale = std::stod(get("width_scale"));
  c.latent_channels = std::stoll(get("latent_channels"));
  if (get("se_placement") != "default") c.se_placement = parse_se_placement(get("se_placement"));
  if (get("conv3d_placement") != "default") {
    c.conv3d_placement = parse_conv3d_placement(get("conv3d_placement"));
  }
  c.se_reduction = std::stoll(get("se_reduction"));
  c.band_by_band = get("band_by_band") == "1";
  c.entropy_model = parse_entropy_model(get("entropy_model"));
  c.support = std::stoi(get("support"));
  c.seed = std::stoull(get("seed"));
  c.validate();
  return c;
}

// ------------------------------------------------------------------- plans

namespace {

Shape apply_reshape(Reshape r, const Shape& s, Index depth) {
  switch (r) {
    case Reshape::none: return s;
    case Reshape::lift:
      if (s.size() != 3) throw ShapeError("lift: expected [B,H,W], got " + to_string(s));
      return {1, s[0], s[1], s[2]};
    case Reshape::flatten:
      if (s.size() != 4) throw ShapeError("flatten: expected [C,D,H,W], got " + to_string(s));
      return {s[0] * s[1], s[2], s[3]};
    case Reshape::unflatten:
      if (s.size() != 3 || s[0] % depth != 0) {
        throw ShapeError("unflatten: cannot split " + to_string(s) + " by depth " +
                         std::to_string(depth));
      }
      return {s[0] / depth, depth, s[1], s[2]};
    case Reshape::squeeze:
      if (s.size() != 4 || s[0] != 1) throw ShapeError("squeeze: expected [1,D,H,W], got " + to_string(s));
      return {s[1], s[2], s[3]};
  }
  return s;
}

Index se_parameter_count(Index channels, Index reduction) {
  const Index hidden = se_hidden_width(channels, reduction);
  return 2 * channels * hidden + hidden + channels;
}

}  // namespace

Index BlockPlan::feature_channels() const {
  return after_conv == Reshape::unflatten ? conv.out_channels / depth : conv.out_channels;
}

EncoderPlan encoder_plan(const ModelConfig& config) {
  config.validate();
  const Index B = config.pass_bands();
  const bool se = config.variant == Variant::se;
  const bool v3 = config.variant == Variant::conv3d;
  const bool all3 = v3 && config.conv3d_arm() == Conv3dPlacement::all;
  const bool se_after_norm = se && config.se_arm() != SePlacement::encoder_initial;
  const Index widths[5] = {config.width(60), config.width(120), config.width(240),
                           config.width(480), config.width(960)};
  EncoderPlan plan;

  BlockPlan b0;
  b0.id = "E.block0";
  b0.norm = true;
  b0.act = Activation::relu;
  if (v3) {
    b0.before = Reshape::lift;
    b0.conv = conv3d_spec(1, widths[0], 7);
    b0.depth = B;
    b0.after = all3 ? Reshape::none : Reshape::flatten;
  } else {
    b0.conv = conv2d_spec(B, widths[0], 7);
    b0.se_in = se;
  }
  plan.blocks.push_back(b0);

  Index prev = v3 && !all3 ? widths[0] * B : widths[0];
  for (int i = 1; i <= 4; ++i) {
    BlockPlan b;
    b.id = "E.block" + std::to_string(i);
    b.norm = true;
    b.act = Activation::relu;
    if (all3) {
      b.conv = conv3d_spec(widths[i - 1], widths[i], 3, 2);
      b.depth = B;
      if (i == 4) b.after = Reshape::flatten;
    } else {
      b.conv = conv2d_spec(prev, widths[i], 3, 2);
      b.se = se_after_norm;
    }
    prev = widths[i];
    plan.blocks.push_back(b);
  }

  BlockPlan last;
  last.id = "E.block5";
  last.conv = conv2d_spec(all3 ? widths[4] * B : widths[4], config.latent(), 3);
  last.norm = true;
  last.act = Activation::relu;
  plan.blocks.push_back(last);
  return plan;
}

GeneratorPlan generator_plan(const ModelConfig& config) {
  config.validate();
  const Index B = config.pass_bands();
  const bool v3 = config.variant == Variant::conv3d;
  const bool all3 = v3 && config.conv3d_arm() == Conv3dPlacement::all;
  const bool se = config.variant == Variant::se &&
                  config.se_arm() == SePlacement::encoder_and_generator;
  const Index c960 = config.width(960);
  GeneratorPlan plan;

  plan.head.id = "G.head";
  plan.head.norm_in = true;
  plan.head.conv = conv2d_spec(config.latent(), c960, 3);
  plan.head.norm = true;
  plan.residual_channels = c960;

  const Index outs[4] = {config.width(480), config.width(240), config.width(120), config.width(60)};
  Index prev = c960;
  for (int i = 0; i < 4; ++i) {
    BlockPlan b;
    b.id = "G.up" + std::to_string(i);
    b.norm = true;
    b.se = se;
    b.act = Activation::relu;
    b.depth = B;
    if (all3 && i > 0) {
      b.conv = conv_transpose3d_spec(prev, outs[i], 3);
    } else if ((all3 && i == 0) || (v3 && i == 3)) {
      // Widen to outs[i] * B channels and regroup them as a volume.
      b.conv = conv_transpose2d_spec(prev, outs[i] * B, 3);
      b.after_conv = Reshape::unflatten;
    } else {
      b.conv = conv_transpose2d_spec(prev, outs[i], 3);
    }
    prev = outs[i];
    plan.up.push_back(b);
  }

  plan.out.id = "G.out";
  plan.out.depth = B;
  if (v3) {
    plan.out.conv = conv3d_spec(outs[3], 1, 7);
    plan.out.after = Reshape::squeeze;
  } else {
    plan.out.conv = conv2d_spec(outs[3], B, 7);
  }
  return plan;
}

DiscriminatorPlan discriminator_plan(const ModelConfig& config) {
  config.validate();
  DiscriminatorPlan plan;
  plan.latent.id = "D.latent";
  plan.latent.conv = conv2d_spec(config.latent_total(), config.width(12), 3);
  plan.latent.act = Activation::leaky;

  const Index widths[4] = {config.width(64), config.width(128), config.width(256),
                           config.width(512)};
  Index prev = config.width(12) + config.bands;
  for (int i = 0; i < 4; ++i) {
    BlockPlan b;
    b.id = "D.conv" + std::to_string(i);
    b.conv = i < 3 ? conv2d_fixed_pad_spec(prev, widths[i], 4, 2, 1)
                   : conv2d_spec(prev, widths[i], 4, 1);
    b.act = Activation::leaky;
    prev = widths[i];
    plan.trunk.push_back(b);
  }
  BlockPlan out;
  out.id = "D.out";
  out.conv = conv2d_spec(prev, 1, 1);
  plan.trunk.push_back(out);
  return plan;
}

Shape block_output_shape(const BlockPlan& plan, const Shape& input) {
  Shape s = apply_reshape(plan.before, input, plan.depth);
  s = conv_output_shape(plan.conv, s);
  s = apply_reshape(plan.after_conv, s, plan.depth);
  return apply_reshape(plan.after, s, plan.depth);
}

namespace {

void require_image(const ModelConfig& config, const Shape& image, Index bands) {
  if (image.size() != 3 || image[0] != bands) {
    throw ShapeError("expected a [" + std::to_string(bands) + ", H, W] image, got " +
                     to_string(image));
  }
  if (image[1] % 16 != 0 || image[2] % 16 != 0) {
    throw ShapeError("image extent " + to_string(image) +
                     " is not a multiple of 16; pad before encoding");
  }
  (void)config;
}

}  // namespace

Shape encoder_output_shape(const ModelConfig& config, const Shape& image) {
  require_image(config, image, config.bands);
  Shape s = config.band_by_band ? Shape{1, image[1], image[2]} : image;
  for (const auto& b : encoder_plan(config).blocks) s = block_output_shape(b, s);
  if (config.band_by_band) s[0] *= config.bands;
  return s;
}

Shape generator_output_shape(const ModelConfig& config, const Shape& latent) {
  if (latent.size() != 3 || latent[0] != config.latent_total()) {
    throw ShapeError("expected a [" + std::to_string(config.latent_total()) +
                     ", h, w] latent, got " + to_string(latent));
  }
  const GeneratorPlan plan = generator_plan(config);
  Shape s = {config.latent(), latent[1], latent[2]};
  s = block_output_shape(plan.head, s);
  for (const auto& b : plan.up) s = block_output_shape(b, s);
  s = block_output_shape(plan.out, s);
  if (config.band_by_band) s[0] *= config.bands;
  return s;
}

Shape discriminator_output_shape(const ModelConfig& config, const Shape& image) {
  require_image(config, image, config.bands);
  Shape s = {config.width(12) + config.bands, image[1], image[2]};
  for (const auto& b : discriminator_plan(config).trunk) s = block_output_shape(b, s);
  return s;
}

Index block_parameter_count(const BlockPlan& plan, Index se_reduction) {
  Index n = conv_parameter_count(plan.conv);
  if (plan.norm_in) n += 2 * plan.conv.in_channels;
  if (plan.se_in) n += se_parameter_count(plan.conv.in_channels, se_reduction);
  if (plan.norm) n += 2 * plan.feature_channels();
  if (plan.se) n += se_parameter_count(plan.feature_channels(), se_reduction);
  return n;
}

ParameterCounts parameter_counts(const ModelConfig& config) {
  ParameterCounts c;
  const Index r = config.se_reduction;
  for (const auto& b : encoder_plan(config).blocks) c.encoder += block_parameter_count(b, r);
  const GeneratorPlan g = generator_plan(config);
  c.generator = block_parameter_count(g.head, r) + block_parameter_count(g.out, r);
  for (const auto& b : g.up) c.generator += block_parameter_count(b, r);
  const Index rc = g.residual_channels;
  c.generator += g.residual_blocks * 2 * (conv_parameter_count(conv2d_spec(rc, rc, 3)) + 2 * rc);
  // Factorized density: 15 matrix, 7 bias and 6 gate entries per channel.
  const Index L = config.latent_total();
  if (config.entropy_model == EntropyModelKind::factorized) {
    c.prior = 28 * L;
  } else {
    const Index z = (L + 1) / 2;
    c.prior = 28 * z + conv_parameter_count(conv2d_spec(L, z, 3, 2)) +
              conv_parameter_count(conv_transpose2d_spec(z, L, 3));
  }
  const DiscriminatorPlan d = discriminator_plan(config);
  c.discriminator = block_parameter_count(d.latent, r);
  for (const auto& b : d.trunk) c.discriminator += block_parameter_count(b, r);
  return c;
}

// --------------------------------------------------------------- ConvBlock

template <typename Scalar>
ConvBlock<Scalar>::ConvBlock(const BlockPlan& plan, Index se_reduction, std::uint64_t seed)
    : conv(plan.id + ".conv", plan.conv, seed), plan_(plan) {
  if (plan.norm_in) norm_in.emplace(plan.id + ".norm_in", plan.conv.in_channels);
  if (plan.se_in) se_in.emplace(plan.id + ".se_in", plan.conv.in_channels, se_reduction, seed);
  if (plan.norm) norm.emplace(plan.id + ".norm", plan.feature_channels());
  if (plan.se) se.emplace(plan.id + ".se", plan.feature_channels(), se_reduction, seed);
}

template <typename Scalar>
Tensor<Scalar> ConvBlock<Scalar>::forward(const Tensor<Scalar>& x) {
  input_shape_ = x.shape();
  Tensor<Scalar> h = x.reshaped(apply_reshape(plan_.before, x.shape(), plan_.depth));
  if (norm_in) h = norm_in->forward(h);
  if (se_in) h = se_in->forward(h);
  h = conv.forward(h);
  conv_out_shape_ = h.shape();
  h.reshape(apply_reshape(plan_.after_conv, h.shape(), plan_.depth));
  if (norm) h = norm->forward(h);
  if (se) h = se->forward(h);
  switch (plan_.act) {
    case Activation::none: pre_act_ = Tensor<Scalar>(); break;
    case Activation::relu: pre_act_ = h; h = relu(h); break;
    case Activation::leaky: pre_act_ = h; h = leaky_relu(h); break;
  }
  pre_act_shape_ = h.shape();
  h.reshape(apply_reshape(plan_.after, h.shape(), plan_.depth));
  return h;
}

template <typename Scalar>
Tensor<Scalar> ConvBlock<Scalar>::backward(const Tensor<Scalar>& grad_out) {
  if (input_shape_.empty()) throw std::logic_error(plan_.id + ": backward before forward");
  Tensor<Scalar> g = grad_out.reshaped(pre_act_shape_);
  if (plan_.act == Activation::relu) g = relu_backward(pre_act_, g);
  if (plan_.act == Activation::leaky) g = leaky_relu_backward(pre_act_, g);
  if (se) g = se->backward(g);
  if (norm) g = norm->backward(g);
  g.reshape(conv_out_shape_);
  g = conv.backward(g);
  if (se_in) g = se_in->backward(g);
  if (norm_in) g = norm_in->backward(g);
  g.reshape(input_shape_);
  return g;
}

template <typename Scalar>
void ConvBlock<Scalar>::collect(ParamList<Scalar>& params) {
  if (norm_in) norm_in->collect(params);
  if (se_in) se_in->collect(params);
  conv.collect(params);
  if (norm) norm->collect(params);
  if (se) se->collect(params);
}

template <typename Scalar>
void ConvBlock<Scalar>::set_trainable(bool on) {
  conv.trainable = on;
  if (norm_in) norm_in->trainable = on;
  if (se_in) se_in->trainable = on;
  if (norm) norm->trainable = on;
  if (se) se->trainable = on;
}

template <typename Scalar>
std::vector<SEBlock<Scalar>*> ConvBlock<Scalar>::se_blocks() {
  std::vector<SEBlock<Scalar>*> out;
  if (se_in) out.push_back(&*se_in);
  if (se) out.push_back(&*se);
  return out;
}

// ----------------------------------------------------------------- Encoder

template <typename Scalar>
Encoder<Scalar>::Encoder(const ModelConfig& config) : bands_(config.pass_bands()) {
  for (const auto& b : encoder_plan(config).blocks) {
    blocks.emplace_back(b, config.se_reduction, config.seed);
  }
}

template <typename Scalar>
Tensor<Scalar> Encoder<Scalar>::forward(const Tensor<Scalar>& x) {
  if (x.rank() != 3 || x.dim(0) != bands_) {
    throw ShapeError("encoder: expected [" + std::to_string(bands_) + ", H, W], got " +
                     to_string(x.shape()));
  }
  if (x.dim(1) % 16 != 0 || x.dim(2) % 16 != 0) {
    throw ShapeError("encoder: image extent " + to_string(x.shape()) +
                     " is not a multiple of 16; pad before encoding");
  }
  Tensor<Scalar> h = x;
  for (auto& b : blocks) h = b.forward(h);
  return h;
}

template <typename Scalar>
Tensor<Scalar> Encoder<Scalar>::backward(const Tensor<Scalar>& grad_y) {
  Tensor<Scalar> g = grad_y;
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g = it->backward(g);
  return g;
}

template <typename Scalar>
void Encoder<Scalar>::collect(ParamList<Scalar>& params) {
  for (auto& b : blocks) b.collect(params);
}

template <typename Scalar>
void Encoder<Scalar>::set_trainable(bool on) {
  for (auto& b : blocks) b.set_trainable(on);
}

template <typename Scalar>
std::vector<SEBlock<Scalar>*> Encoder<Scalar>::se_blocks() {
  std::vector<SEBlock<Scalar>*> out;
  for (auto& b : blocks)
    for (auto* s : b.se_blocks()) out.push_back(s);
  return out;
}

// --------------------------------------------------------------- Generator

template <typename Scalar>
Generator<Scalar>::Generator(const ModelConfig& config) : latent_(config.latent()) {
  const GeneratorPlan plan = generator_plan(config);
  head = ConvBlock<Scalar>(plan.head, config.se_reduction, config.seed);
  for (int i = 0; i < plan.residual_blocks; ++i) {
    residuals.emplace_back("G.res" + std::to_string(i), plan.residual_channels, config.seed);
  }
  for (const auto& b : plan.up) up.emplace_back(b, config.se_reduction, config.seed);
  out = ConvBlock<Scalar>(plan.out, config.se_reduction, config.seed);
}

template <typename Scalar>
Tensor<Scalar> Generator<Scalar>::forward(const Tensor<Scalar>& y) {
  if (y.rank() != 3 || y.dim(0) != latent_) {
    throw ShapeError("generator: expected [" + std::to_string(latent_) + ", h, w] latent, got " +
                     to_string(y.shape()));
  }
  const Tensor<Scalar> h0 = head.forward(y);
  Tensor<Scalar> r = h0;
  for (auto& block : residuals) r = block.forward(r);
  r.array() += h0.array();
  for (auto& b : up) r = b.forward(r);
  return out.forward(r);
}

template <typename Scalar>
Tensor<Scalar> Generator<Scalar>::backward(const Tensor<Scalar>& grad_x) {
  Tensor<Scalar> g = out.backward(grad_x);
  for (auto it = up.rbegin(); it != up.rend(); ++it) g = it->backward(g);
  Tensor<Scalar> gr = g;
  for (auto it = residuals.rbegin(); it != residuals.rend(); ++it) gr = it->backward(gr);
  gr.array() += g.array();
  return head.backward(gr);
}

template <typename Scalar>
void Generator<Scalar>::collect(ParamList<Scalar>& params) {
  head.collect(params);
  for (auto& r : residuals) r.collect(params);
  for (auto& b : up) b.collect(params);
  out.collect(params);
}

template <typename Scalar>
void Generator<Scalar>::set_trainable(bool on) {
  head.set_trainable(on);
  for (auto& r : residuals) r.set_trainable(on);
  for (auto& b : up) b.set_trainable(on);
  out.set_trainable(on);
}

template <typename Scalar>
std::vector<SEBlock<Scalar>*> Generator<Scalar>::se_blocks() {
  std::vector<SEBlock<Scalar>*> result;
  for (auto& b : up)
    for (auto* s : b.se_blocks()) result.push_back(s);
  return result;
}

// ----------------------------------------------------------- Discriminator

template <typename Scalar>
Discriminator<Scalar>::Discriminator(const ModelConfig& config)
    : latent_features_(config.width(12)), bands_(config.bands) {
  const DiscriminatorPlan plan = discriminator_plan(config);
  upsample_ = plan.upsample;
  latent = ConvBlock<Scalar>(plan.latent, config.se_reduction, config.seed);
  for (const auto& b : plan.trunk) trunk.emplace_back(b, config.se_reduction, config.seed);
}

template <typename Scalar>
Tensor<Scalar> Discriminator<Scalar>::forward(const Tensor<Scalar>& x, const Tensor<Scalar>& y) {
  if (x.rank() != 3 || x.dim(0) != bands_) {
    throw ShapeError("discriminator: expected [" + std::to_string(bands_) + ", H, W] image, got " +
                     to_string(x.shape()));
  }
  if (y.rank() != 3 || y.dim(1) * upsample_ != x.dim(1) || y.dim(2) * upsample_ != x.dim(2)) {
    throw ShapeError("discriminator: latent " + to_string(y.shape()) +
                     " does not match image extent " + to_string(x.shape()));
  }
  const Tensor<Scalar> f = nn_upsample(latent.forward(y), upsample_);
  Tensor<Scalar> h(Shape{latent_features_ + bands_, x.dim(1), x.dim(2)});
  const Index plane = x.dim(1) * x.dim(2);
  h.data().head(latent_features_ * plane) = f.data();
  h.data().tail(bands_ * plane) = x.data();
  for (auto& b : trunk) h = b.forward(h);
  return h;
}

template <typename Scalar>
Tensor<Scalar> Discriminator<Scalar>::probabilities(const Tensor<Scalar>& x,
                                                    const Tensor<Scalar>& y) {
  return sigmoid(forward(x, y));
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> Discriminator<Scalar>::backward(
    const Tensor<Scalar>& grad_logits) {
  Tensor<Scalar> g = grad_logits;
  for (auto it = trunk.rbegin(); it != trunk.rend(); ++it) g = it->backward(g);
  const Index h = g.dim(1), w = g.dim(2), plane = h * w;
  Tensor<Scalar> gf(Shape{latent_features_, h, w}, g.data().head(latent_features_ * plane).eval());
  Tensor<Scalar> gx(Shape{bands_, h, w}, g.data().tail(bands_ * plane).eval());
  Tensor<Scalar> gy = latent.backward(nn_upsample_backward(gf, upsample_));
  return {std::move(gx), std::move(gy)};
}

template <typename Scalar>
void Discriminator<Scalar>::collect(ParamList<Scalar>& params) {
  latent.collect(params);
  for (auto& b : trunk) b.collect(params);
}

template <typename Scalar>
void Discriminator<Scalar>::set_trainable(bool on) {
  latent.set_trainable(on);
  for (auto& b : trunk) b.set_trainable(on);
}

// ------------------------------------------------------------------- Model

template <typename Scalar>
Model<Scalar>::Model(const ModelConfig& config)
    : encoder((config.validate(), config)),
      generator(config),
      bottleneck(config.latent_total(), config.entropy_model, config.support, config.seed),
      discriminator(config),
      config_(config) {}

namespace {

template <typename Scalar>
Tensor<Scalar> channel_slice(const Tensor<Scalar>& t, Index first, Index count) {
  const Index plane = t.size() / t.dim(0);
  return Tensor<Scalar>(Shape{count, t.dim(1), t.dim(2)},
                        t.data().segment(first * plane, count * plane).eval());
}

template <typename Scalar>
void set_channels(Tensor<Scalar>& t, Index first, const Tensor<Scalar>& part) {
  const Index plane = t.size() / t.dim(0);
  t.data().segment(first * plane, part.size()) = part.data();
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> Model<Scalar>::encode(const Tensor<Scalar>& x) {
  if (!config_.band_by_band) return encoder.forward(x);
  if (x.rank() != 3 || x.dim(0) != config_.bands) {
    throw ShapeError("encode: expected [" + std::to_string(config_.bands) + ", H, W], got " +
                     to_string(x.shape()));
  }
  const Index L = config_.latent();
  Tensor<Scalar> y;
  for (Index b = 0; b < config_.bands; ++b) {
    const Tensor<Scalar> yb = encoder.forward(channel_slice(x, b, 1));
    if (y.empty()) y = Tensor<Scalar>(Shape{config_.bands * L, yb.dim(1), yb.dim(2)});
    set_channels(y, b * L, yb);
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> Model<Scalar>::encode_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_y) {
  if (!config_.band_by_band) return encoder.backward(grad_y);
  const Index L = config_.latent();
  Tensor<Scalar> dx(x.shape());
  for (Index b = 0; b < config_.bands; ++b) {
    encoder.forward(channel_slice(x, b, 1));
    set_channels(dx, b, encoder.backward(channel_slice(grad_y, b * L, L)));
  }
  return dx;
}

template <typename Scalar>
Tensor<Scalar> Model<Scalar>::generate(const Tensor<Scalar>& y) {
  if (!config_.band_by_band) return generator.forward(y);
  if (y.rank() != 3 || y.dim(0) != config_.latent_total()) {
    throw ShapeError("generate: expected [" + std::to_string(config_.latent_total()) +
                     ", h, w], got " + to_string(y.shape()));
  }
  const Index L = config_.latent();
  Tensor<Scalar> x;
  for (Index b = 0; b < config_.bands; ++b) {
    const Tensor<Scalar> xb = generator.forward(channel_slice(y, b * L, L));
    if (x.empty()) x = Tensor<Scalar>(Shape{config_.bands, xb.dim(1), xb.dim(2)});
    set_channels(x, b, xb);
  }
  return x;
}

template <typename Scalar>
Tensor<Scalar> Model<Scalar>::generate_backward(const Tensor<Scalar>& y,
                                                const Tensor<Scalar>& grad_x) {
  if (!config_.band_by_band) return generator.backward(grad_x);
  const Index L = config_.latent();
  Tensor<Scalar> dy(y.shape());
  for (Index b = 0; b < config_.bands; ++b) {
    generator.forward(channel_slice(y, b * L, L));
    set_channels(dy, b * L, generator.backward(channel_slice(grad_x, b, 1)));
  }
  return dy;
}

template <typename Scalar>
ParamList<Scalar> Model<Scalar>::encoder_params() {
  ParamList<Scalar> p;
  encoder.collect(p);
  return p;
}

template <typename Scalar>
ParamList<Scalar> Model<Scalar>::generator_params() {
  ParamList<Scalar> p;
  generator.collect(p);
  return p;
}

template <typename Scalar>
ParamList<Scalar> Model<Scalar>::prior_params() {
  ParamList<Scalar> p;
  bottleneck.collect(p);
  return p;
}

template <typename Scalar>
ParamList<Scalar> Model<Scalar>::discriminator_params() {
  ParamList<Scalar> p;
  discriminator.collect(p);
  return p;
}

template <typename Scalar>
ParamList<Scalar> Model<Scalar>::parameters() {
  ParamList<Scalar> p;
  encoder.collect(p);
  generator.collect(p);
  bottleneck.collect(p);
  discriminator.collect(p);
  return p;
}

template <typename Scalar>
std::vector<SEBlock<Scalar>*> Model<Scalar>::se_blocks() {
  auto out = encoder.se_blocks();
  for (auto* s : generator.se_blocks()) out.push_back(s);
  return out;
}

template class ConvBlock<float>;
template class ConvBlock<double>;
template class Encoder<float>;
template class Encoder<double>;
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template class Model<float>;
template class Model<double>;

}  // namespace hssc
