#include "lit4/cost.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "lit4/error.hpp"

namespace lit4 {

const char* const kFlopConvention =
    "1 multiply-accumulate = 1 FLOP; softmax, normalization and activation = "
    "5 per element; elementwise products and divisions = 1 per element; "
    "additions, lookups and pooling = 0; batch size 1";

CostEntry linear_cost(std::size_t in, std::size_t out, std::size_t tokens, bool bias) {
  const std::uint64_t i = in, o = out;
  return {"linear", i * o + (bias ? o : 0), std::uint64_t{tokens} * i * o};
}

namespace {

using u64 = std::uint64_t;
using ops::Activation;

bool under(const std::string& path, const std::string& prefix) {
  return path == prefix ||
         (path.size() > prefix.size() && path.compare(0, prefix.size(), prefix) == 0 &&
          path[prefix.size()] == '.');
}

u64 act_cost(Activation act, u64 elements) {
  return act == Activation::identity ? 0 : 5 * elements;
}

// Accumulates into the entry opened by the last begin().
class Tally {
 public:
  explicit Tally(CostReport& r) : r_(r) {}

  void begin(std::string path) { r_.entries.push_back({std::move(path), 0, 0}); }
  void params(u64 n) { r_.entries.back().params += n; }
  void flops(u64 n) { r_.entries.back().flops += n; }

  void linear(u64 in, u64 out, u64 tokens, bool bias = true) {
    const auto c = linear_cost(in, out, tokens, bias);
    params(c.params);
    flops(c.flops);
  }
  void layer_norm(u64 dim, u64 tokens) {
    params(2 * dim);
    flops(5 * dim * tokens);
  }
  // Returns the output side length.
  std::size_t conv(u64 in, u64 out, std::size_t kernel, std::size_t stride,
                   u64 groups, bool bias, std::size_t side, bool same_padding = true) {
    const std::size_t pad = same_padding ? kernel / 2 : 0;
    const std::size_t out_side = (side + 2 * pad - kernel) / stride + 1;
    params(out * (in / groups) * kernel * kernel + (bias ? out : 0));
    flops(u64{out_side} * out_side * out * (in / groups) * kernel * kernel);
    return out_side;
  }
  void batch_norm(u64 channels, std::size_t side) {
    params(2 * channels);
    flops(5 * channels * side * side);
  }
  std::size_t conv_bn(u64 in, u64 out, std::size_t kernel, std::size_t stride,
                      u64 groups, Activation act, std::size_t side) {
    const std::size_t s = conv(in, out, kernel, stride, groups, false, side);
    batch_norm(out, s);
    flops(act_cost(act, out * s * s));
    return s;
  }
  void ffn(u64 dim, u64 hidden, u64 tokens, Activation act) {
    linear(dim, hidden, tokens);
    flops(act_cost(act, hidden * tokens));
    linear(hidden, dim, tokens);
  }
  // Pre-norm MSA block over `sequences` independent sequences of `tokens`.
  void transformer_block(u64 dim, u64 heads, u64 hidden, u64 tokens,
                         u64 sequences, Activation act) {
    const u64 total = tokens * sequences;
    layer_norm(dim, total);
    for (int i = 0; i < 4; ++i) linear(dim, dim, total);
    flops(sequences * attention_mixing_flops(tokens, dim, heads));
    layer_norm(dim, total);
    ffn(dim, hidden, total, act);
  }

 private:
  CostReport& r_;
};

void text_costs(Tally& t, const TextEncoderConfig& c, std::size_t tokens) {
  const u64 d = c.dim;
  t.begin("text.token_embedding");
  t.params(c.vocab_size * d);
  t.begin("text.position_embedding");
  t.params(c.max_len * d);
  for (std::size_t i = 0; i < c.layers; ++i) {
    t.begin("text.blocks." + std::to_string(i));
    t.transformer_block(d, c.heads, d * c.hidden_ratio, tokens, 1, Activation::gelu);
  }
  t.begin("text.norm");
  t.layer_norm(d, 1);  // only the CLS state is normalized
}

void vit_costs(Tally& t, const VitConfig& c, std::size_t channels) {
  const u64 d = c.dim;
  const std::size_t grid = c.input_size / c.patch;
  const u64 tokens = u64{grid} * grid + 1;
  t.begin("image.patch_embed");
  t.conv(channels, d, c.patch, c.patch, 1, true, c.input_size, false);
  t.begin("image.cls_token");
  t.params(d);
  t.begin("image.pos_embed");
  t.params(tokens * d);
  for (std::size_t i = 0; i < c.layers; ++i) {
    t.begin("image.blocks." + std::to_string(i));
    t.transformer_block(d, c.heads, d * c.hidden_ratio, tokens, 1, Activation::gelu);
  }
  t.begin("image.norm");
  t.layer_norm(d, 1);
}

std::size_t inverted_residual(Tally& t, u64 in, u64 out, std::size_t stride,
                              u64 expansion, std::size_t side) {
  const u64 hidden = in * expansion;
  if (expansion != 1) t.conv_bn(in, hidden, 1, 1, 1, Activation::silu, side);
  side = t.conv_bn(hidden, hidden, 3, stride, hidden, Activation::silu, side);
  t.conv_bn(hidden, out, 1, 1, 1, Activation::identity, side);
  return side;
}

void mobilevit_costs(Tally& t, const MobileVitConfig& c, std::size_t channels,
                     std::size_t side) {
  t.begin("image.stem");
  side = t.conv_bn(channels, c.stem, 3, 2, 1, Activation::silu, side);
  u64 width = c.stem;
  for (std::size_t i = 0; i < c.mv2_depths[0]; ++i) {
    t.begin("image.layer1." + std::to_string(i));
    side = inverted_residual(t, width, c.channels[0], 1, c.expansion, side);
    width = c.channels[0];
  }
  for (std::size_t i = 0; i < c.mv2_depths[1]; ++i) {
    t.begin("image.layer2." + std::to_string(i));
    side = inverted_residual(t, width, c.channels[1], i == 0 ? 2 : 1, c.expansion, side);
    width = c.channels[1];
  }
  for (std::size_t s = 0; s < 3; ++s) {
    t.begin("image.stages." + std::to_string(s));
    const u64 ch = c.channels[s + 2];
    side = inverted_residual(t, width, ch, 2, c.expansion, side);
    width = ch;
    const u64 d = c.dims[s];
    const u64 pixels = u64{side} * side;
    const u64 in_patch = u64{c.patch} * c.patch;
    t.conv_bn(ch, ch, 3, 1, 1, Activation::silu, side);
    t.conv(ch, d, 1, 1, 1, false, side);
    for (std::size_t b = 0; b < c.depths[s]; ++b)
      t.transformer_block(d, c.heads, d * c.ffn_ratio, pixels / in_patch, in_patch,
                          Activation::silu);
    t.layer_norm(d, pixels);
    t.conv_bn(d, ch, 1, 1, 1, Activation::silu, side);
    t.conv_bn(2 * ch, ch, 3, 1, 1, Activation::silu, side);
  }
  t.begin("image.expand");
  t.conv_bn(width, c.final_channels, 1, 1, 1, Activation::silu, side);
}

void xcit_costs(Tally& t, const XcitConfig& c, std::size_t channels,
                std::size_t side) {
  const std::size_t convs = c.stem_convs();
  u64 width = channels;
  for (std::size_t i = 0; i < convs; ++i) {
    t.begin("image.stem." + std::to_string(i));
    const u64 out = c.dim >> (convs - 1 - i);
    side = t.conv_bn(width, out, 3, 2, 1,
                     i + 1 == convs ? Activation::identity : Activation::gelu, side);
    width = out;
  }
  const u64 d = c.dim, hidden = c.dim * c.hidden_ratio;
  const u64 tokens = u64{side} * side;
  for (std::size_t i = 0; i < c.layers; ++i) {
    t.begin("image.layers." + std::to_string(i));
    t.layer_norm(d, tokens);
    for (int k = 0; k < 4; ++k) t.linear(d, d, tokens);
    t.params(c.heads);  // temperature
    t.flops(xca_mixing_flops(tokens, d, c.heads));
    t.params(d);  // gamma1
    t.flops(tokens * d);
    // local patch interaction
    t.layer_norm(d, tokens);
    t.conv(d, d, 3, 1, d, true, side);
    t.flops(act_cost(Activation::gelu, tokens * d));
    t.batch_norm(d, side);
    t.conv(d, d, 3, 1, d, true, side);
    t.params(d);
    t.flops(tokens * d);
    t.layer_norm(d, tokens);
    t.ffn(d, hidden, tokens, Activation::gelu);
    t.params(d);  // gamma2
    t.flops(tokens * d);
  }
  t.begin("image.cls_token");
  t.params(d);
  const u64 all = tokens + 1;
  for (std::size_t i = 0; i < c.class_layers; ++i) {
    t.begin("image.class_blocks." + std::to_string(i));
    t.layer_norm(d, all);
    t.linear(d, d, 1);       // query from the class token
    t.linear(d, d, all);     // keys
    t.linear(d, d, all);     // values
    t.linear(d, d, 1);       // output projection
    const u64 dh = d / c.heads;
    t.flops(c.heads * (2 * all * dh + 5 * all));
    t.params(d);
    t.flops(d);
    t.layer_norm(d, 1);
    t.ffn(d, hidden, 1, Activation::gelu);
    t.params(d);
    t.flops(d);
  }
  t.begin("image.norm");
  t.layer_norm(d, 1);
}

CostReport build(const ModelConfig& config, const CostGeometry& geometry) {
  config.validate();
  ModelConfig cfg = config;
  if (geometry.input_size != 0) cfg.image.set_input_size(geometry.input_size);
  try {
    cfg.image.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("input geometry: ") + e.what());
  }
  const std::size_t tokens =
      geometry.text_tokens == 0 ? cfg.text.max_len : geometry.text_tokens;
  if (tokens > cfg.text.max_len)
    throw ConfigError("question tokens " + std::to_string(tokens) +
                      " exceed text_encoder.max_len " +
                      std::to_string(cfg.text.max_len));

  CostReport r;
  r.input_size = cfg.image.input_size();
  r.text_tokens = tokens;
  r.convention = kFlopConvention;
  Tally t(r);
  text_costs(t, cfg.text, tokens);
  const std::size_t side = cfg.image.input_size();
  if (const auto* v = std::get_if<VitConfig>(&cfg.image.arch))
    vit_costs(t, *v, cfg.image.channels);
  else if (const auto* m = std::get_if<MobileVitConfig>(&cfg.image.arch))
    mobilevit_costs(t, *m, cfg.image.channels, side);
  else
    xcit_costs(t, std::get<XcitConfig>(cfg.image.arch), cfg.image.channels, side);

  const auto& f = cfg.fusion;
  t.begin("fusion");
  t.linear(f.text_dim, f.dim, 1);
  t.linear(f.image_dim, f.dim, 1);
  t.flops(2 * act_cost(f.activation, f.dim) + f.dim);
  const auto& h = cfg.head;
  t.begin("head");
  t.linear(f.dim, h.hidden, 1);
  t.flops(act_cost(h.activation, h.hidden));
  t.linear(h.hidden, h.answers, 1);

  for (const auto& e : r.entries) {
    r.total_params += e.params;
    r.total_flops += e.flops;
  }
  return r;
}

}  // namespace

std::uint64_t CostReport::params_under(const std::string& prefix) const {
  u64 n = 0;
  for (const auto& e : entries)
    if (under(e.path, prefix)) n += e.params;
  return n;
}

std::uint64_t CostReport::flops_under(const std::string& prefix) const {
  u64 n = 0;
  for (const auto& e : entries)
    if (under(e.path, prefix)) n += e.flops;
  return n;
}

std::string CostReport::to_tsv() const {
  std::ostringstream os;
  os << "# " << convention << "\n";
  os << "# input " << input_size << "x" << input_size << ", question tokens "
     << text_tokens << "\n";
  os << "module\tparams\tflops\n";
  for (const auto& e : entries) os << e.path << '\t' << e.params << '\t' << e.flops << '\n';
  os << "total\t" << total_params << '\t' << total_flops << '\n';
  return os.str();
}

std::string CostReport::to_json() const {
  nlohmann::ordered_json j;
  j["convention"] = convention;
  j["input_size"] = input_size;
  j["text_tokens"] = text_tokens;
  auto& arr = j["modules"] = nlohmann::ordered_json::array();
  for (const auto& e : entries)
    arr.push_back({{"module", e.path}, {"params", e.params}, {"flops", e.flops}});
  j["total"] = {{"params", total_params}, {"flops", total_flops}};
  return j.dump(2) + "\n";
}

CostReport count_params(const ModelConfig& config) {
  auto r = build(config, {});
  for (auto& e : r.entries) e.flops = 0;
  r.total_flops = 0;
  r.convention = "learnable scalars only";
  return r;
}

CostReport count_flops(const ModelConfig& config, const CostGeometry& geometry) {
  return build(config, geometry);
}

std::uint64_t attention_mixing_flops(std::size_t tokens, std::size_t dim,
                                     std::size_t heads) {
  const u64 t = tokens, dh = dim / heads;
  return heads * (2 * t * t * dh + 5 * t * t);
}

std::uint64_t xca_mixing_flops(std::size_t tokens, std::size_t dim,
                               std::size_t heads) {
  const u64 t = tokens, dh = dim / heads;
  return 2 * 5 * t * dim + heads * (2 * t * dh * dh + dh * dh + 5 * dh * dh);
}

double scaling_exponent(std::uint64_t (*cost)(std::size_t, std::size_t, std::size_t),
                        std::size_t tokens, std::size_t dim, std::size_t heads) {
  const double a = static_cast<double>(cost(tokens, dim, heads));
  const double b = static_cast<double>(cost(2 * tokens, dim, heads));
  return std::log2(b / a);
}

bool RuntimeComparison::ok() const {
  for (const auto& c : checks)
    if (!c.ok()) return false;
  return !checks.empty();
}

std::string RuntimeComparison::to_string() const {
  std::ostringstream os;
  for (const auto& c : checks)
    os << (c.ok() ? "ok  " : "DIFF") << '\t' << c.path << '\t' << c.predicted
       << '\t' << c.runtime << '\n';
  return os.str();
}

template <typename T>
RuntimeComparison verify_against_runtime(const CostReport& report,
                                         const ParamStore<T>& store) {
  RuntimeComparison cmp;
  for (const auto& e : report.entries)
    cmp.checks.push_back({e.path, e.params, store.parameter_count(e.path)});
  cmp.checks.push_back({"total", report.total_params, store.parameter_count()});
  return cmp;
}

template RuntimeComparison verify_against_runtime(const CostReport&,
                                                  const ParamStore<float>&);
template RuntimeComparison verify_against_runtime(const CostReport&,
                                                  const ParamStore<double>&);

}  // namespace lit4
