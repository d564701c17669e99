#include "lit4/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lit4/error.hpp"
#include "lit4/model.hpp"
#include "lit4/rng.hpp"

namespace lit4 {

namespace {

using D = double;
using TensorD = Tensor<D>;

double weighted_sum(const TensorD& out, const std::vector<D>& weights) {
  auto d = out.data();
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += d[i] * weights[i];
  return s;
}

std::vector<std::size_t> probe_coords(std::size_t n, std::size_t limit,
                                      CounterRng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= limit) return idx;
  for (std::size_t i = 0; i < limit; ++i)
    std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

TensorD random_tensor(CounterRng& rng, Shape shape, double scale = 1.0,
                      bool requires_grad = true) {
  std::vector<D> v(numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return TensorD(std::move(shape), std::move(v), requires_grad);
}

// Values bounded away from zero, for inputs at a kink or a pole.
TensorD away_from_zero(CounterRng& rng, Shape shape, double margin) {
  std::vector<D> v(numel(shape));
  for (auto& x : v) {
    const double n = rng.normal();
    x = (n < 0 ? -1.0 : 1.0) * (margin + std::abs(n));
  }
  return TensorD(std::move(shape), std::move(v), true);
}

// Re-draws every parameter so that zero-initialized scales and tiny
// initial weights do not hide gradient paths.
void randomize(ParamStore<D>& store, CounterRng& rng, double scale) {
  for (auto& e : store.entries()) {
    if (e.role != TensorRole::parameter) continue;
    const bool temperature = e.name.size() >= 11 &&
                             e.name.compare(e.name.size() - 11, 11, "temperature") == 0;
    for (auto& x : e.tensor.mutable_data())
      x = temperature ? 1.0 + 0.3 * std::abs(rng.normal()) : scale * rng.normal();
  }
}

std::vector<TensorD> store_params(const ParamStore<D>& store) {
  std::vector<TensorD> out;
  for (const auto& e : store.entries())
    if (e.role == TensorRole::parameter) out.push_back(e.tensor);
  return out;
}

// Runs f with the store's parameters as the checked inputs; the closure
// reads them through the module structs that alias the same tensors.
GradCheckResult check_module(const std::string& name, ParamStore<D>& store,
                             std::vector<TensorD> extra,
                             const std::function<TensorD()>& f,
                             const GradCheckOptions& options) {
  auto inputs = store_params(store);
  inputs.insert(inputs.end(), extra.begin(), extra.end());
  return check_gradients(
      name, [&](const std::vector<TensorD>&) { return f(); }, inputs, options);
}

}  // namespace

GradCheckResult check_gradients(const std::string& name, const GradFn& f,
                                const std::vector<Tensor<double>>& inputs,
                                const GradCheckOptions& options) {
  for (const auto& x : inputs)
    if (!x.requires_grad())
      throw ContractError("check_gradients(" + name + "): inputs must require grad");
  CounterRng rng(options.seed, 0x67726164ULL);

  const auto probe = f(inputs);
  std::vector<D> weights(probe.numel());
  for (auto& w : weights) w = rng.normal();
  const TensorD weight_tensor(probe.shape(), weights);

  for (auto x : inputs) x.zero_grad();
  Tape<D> tape;
  if (!options.fault_op.empty())
    tape.set_gradient_fault(options.fault_op, options.fault_scale);
  TensorD loss;
  {
    Recording<D> rec(tape);
    loss = ops::sum(ops::mul(f(inputs), weight_tensor));
  }
  backward(loss, tape);

  GradCheckResult result{name, 0.0, 0, true};
  struct Probe {
    double worst = 0.0;
    double scale = 0.0;
  };
  std::vector<Probe> probes;
  double global = 0.0;
  for (auto x : inputs) {
    const std::vector<D> analytic =
        x.has_grad() ? std::vector<D>(x.grad().begin(), x.grad().end())
                     : std::vector<D>(x.numel(), 0.0);
    auto data = x.mutable_data();
    Probe p;
    for (std::size_t i : probe_coords(x.numel(), options.max_coords, rng)) {
      const D orig = data[i];
      const D h = 1e-4 * std::max(1.0, std::abs(orig));
      data[i] = orig + h;
      const double up = weighted_sum(f(inputs), weights);
      data[i] = orig - h;
      const double down = weighted_sum(f(inputs), weights);
      data[i] = orig;
      const double numeric = (up - down) / (2 * h);
      p.worst = std::max(p.worst, std::abs(analytic[i] - numeric));
      p.scale = std::max({p.scale, std::abs(numeric), std::abs(analytic[i])});
      ++result.coords;
    }
    global = std::max(global, p.scale);
    probes.push_back(p);
  }
  // A tensor whose true gradient vanishes (a key bias under softmax shift
  // invariance, say) is measured against 1e-3 of the largest gradient in
  // the check, so round-off does not count as a relative error.
  for (const auto& p : probes)
    result.max_error = std::max(
        result.max_error, p.worst / std::max({p.scale, 1e-3 * global, 1e-12}));
  result.passed = result.max_error <= options.tolerance;
  return result;
}

std::vector<GradCase> op_suite() {
  std::vector<GradCase> cases;
  auto add = [&](std::string name,
                 std::function<GradCheckResult(const std::string&, CounterRng&,
                                               const GradCheckOptions&)> body) {
    const std::uint64_t stream = cases.size() + 1;
    cases.push_back({name, [name, body, stream](const GradCheckOptions& o) {
                       CounterRng rng(o.seed, stream);
                       return body(name, rng, o);
                     }});
  };
  using V = std::vector<TensorD>;
  // Case whose inputs are freshly drawn tensors of the given shapes.
  auto simple = [&](std::string name, std::vector<Shape> shapes,
                    std::function<TensorD(const V&)> fn) {
    add(name, [shapes, fn](const std::string& n, CounterRng& rng,
                           const GradCheckOptions& o) {
      V in;
      for (const auto& s : shapes) in.push_back(random_tensor(rng, s));
      return check_gradients(n, fn, in, o);
    });
  };

  // ---- tensor core ----
  simple("matmul", {{3, 4}, {4, 5}}, [](const V& v) { return ops::matmul(v[0], v[1]); });
  simple("matmul_broadcast", {{2, 3, 4}, {4, 2}},
         [](const V& v) { return ops::matmul(v[0], v[1]); });
  simple("linear", {{2, 3, 4}, {4, 5}, {5}},
         [](const V& v) { return ops::linear(v[0], v[1], v[2]); });
  simple("add_broadcast", {{2, 3}, {3}}, [](const V& v) { return ops::add(v[0], v[1]); });
  simple("sub", {{2, 3}, {2, 3}}, [](const V& v) { return ops::sub(v[0], v[1]); });
  simple("mul_broadcast", {{2, 1, 3}, {4, 3}},
         [](const V& v) { return ops::mul(v[0], v[1]); });
  add("div", [](const std::string& n, CounterRng& rng, const GradCheckOptions& o) {
    V in{random_tensor(rng, {2, 3}), away_from_zero(rng, {2, 3}, 0.5)};
    return check_gradients(n, [](const V& v) { return ops::div(v[0], v[1]); }, in, o);
  });
  simple("scale", {{5}}, [](const V& v) { return ops::scale(v[0], 2.5); });
  add("relu", [](const std::string& n, CounterRng& rng, const GradCheckOptions& o) {
    V in{away_from_zero(rng, {3, 4}, 0.1)};
    return check_gradients(n, [](const V& v) { return ops::relu(v[0]); }, in, o);
  });
  simple("gelu", {{3, 4}}, [](const V& v) { return ops::gelu(v[0]); });
  simple("silu", {{3, 4}}, [](const V& v) { return ops::silu(v[0]); });
  simple("tanh", {{3, 4}}, [](const V& v) { return ops::tanh(v[0]); });
  simple("softmax_last", {{3, 5}}, [](const V& v) { return ops::softmax(v[0], 1); });
  simple("softmax_inner", {{2, 4, 3}}, [](const V& v) { return ops::softmax(v[0], 1); });
  simple("masked_softmax", {{2, 3, 4}}, [](const V& v) {
    static const std::vector<std::uint8_t> valid{1, 1, 0, 1, 1, 0, 0, 0};
    return ops::masked_softmax(v[0], valid);
  });
  simple("layer_norm", {{3, 6}, {6}, {6}},
         [](const V& v) { return ops::layer_norm(v[0], v[1], v[2], 1e-6); });
  simple("l2_normalize", {{3, 4}},
         [](const V& v) { return ops::l2_normalize(v[0], 0, 1e-12); });
  for (bool training : {true, false}) {
    simple(training ? "batch_norm_train" : "batch_norm_eval", {{2, 3, 3, 3}, {3}, {3}},
           [training](const V& v) {
             auto mean = TensorD({3}, {0.1, -0.2, 0.3});
             auto var = TensorD({3}, {1.5, 0.7, 1.1});
             return ops::batch_norm2d(v[0], v[1], v[2], mean, var,
                                      ops::BatchNormState{training, 0.1, 1e-5});
           });
  }
  simple("conv2d", {{2, 3, 6, 5}, {4, 3, 3, 3}, {4}}, [](const V& v) {
    return ops::conv2d(v[0], v[1], v[2], ops::Conv2dOptions{2, 1, 1});
  });
  simple("conv2d_depthwise", {{2, 4, 5, 5}, {4, 1, 3, 3}, {4}}, [](const V& v) {
    return ops::conv2d(v[0], v[1], v[2], ops::Conv2dOptions{1, 1, 4});
  });
  simple("sum", {{3, 4}}, [](const V& v) { return ops::sum(v[0]); });
  simple("mean", {{3, 4, 2}}, [](const V& v) { return ops::mean(v[0], 1); });
  simple("embedding", {{6, 4}}, [](const V& v) {
    static const std::vector<std::int32_t> ids{1, 5, 1, 0, 3, 2};
    return ops::embedding(v[0], ids, {2, 3});
  });
  simple("dropout", {{4, 5}}, [](const V& v) { return ops::dropout(v[0], 0.3, true, 11); });
  simple("cross_entropy", {{3, 5}}, [](const V& v) {
    static const std::vector<std::int32_t> t{4, 0, 2};
    return ops::cross_entropy(v[0], t);
  });
  simple("reshape", {{2, 6}}, [](const V& v) { return ops::reshape(v[0], {3, 4}); });
  simple("permute", {{2, 3, 4}}, [](const V& v) { return ops::permute(v[0], {2, 0, 1}); });
  simple("transpose", {{2, 3, 4}}, [](const V& v) { return ops::transpose(v[0]); });
  simple("slice", {{3, 5}}, [](const V& v) { return ops::slice(v[0], 1, 1, 3); });
  simple("concat", {{2, 3}, {2, 2}}, [](const V& v) { return ops::concat(v, 1); });

  // ---- attention blocks ----
  simple("attention", {{2, 4, 3}, {2, 5, 3}, {2, 5, 3}},
         [](const V& v) { return attention(v[0], v[1], v[2]); });
  add("msa", [](const std::string& n, CounterRng& rng, const GradCheckOptions& o) {
    ParamStore<D> store;
    auto p = make_attention(ParamFactory<D>(store, rng, "msa"), 4, 2);
    randomize(store, rng, 0.5);
    auto x = random_tensor(rng, {2, 3, 4});
    return check_module(n, store, {x}, [&] { return msa(x, p); }, o);
  });
  add("xca", [](const std::string& n, CounterRng& rng, const GradCheckOptions& o) {
    ParamStore<D> store;
    auto p = make_xca(ParamFactory<D>(store, rng, "xca"), 4, 2);
    randomize(store, rng, 0.5);
    auto x = random_tensor(rng, {2, 5, 4});
    return check_module(n, store, {x}, [&] { return xca(x, p); }, o);
  });
  add("transformer_block", [](const std::string& n, CounterRng& rng,
                              const GradCheckOptions& o) {
    ParamStore<D> store;
    auto p = make_block(ParamFactory<D>(store, rng, "block"), 4, 2, 16, Activation::gelu);
    randomize(store, rng, 0.5);
    auto x = random_tensor(rng, {3, 4});
    return check_module(n, store, {x}, [&] { return transformer_block(x, p); }, o);
  });
  simple("unfold", {{2, 3, 4, 6}}, [](const V& v) { return unfold(v[0], 2, 3); });
  simple("fold", {{2, 6, 4, 3}}, [](const V& v) { return fold(v[0], 2, 3, 4, 6); });
  add("mobilevit_block", [](const std::string& n, CounterRng& rng,
                            const GradCheckOptions& o) {
    ParamStore<D> store;
    auto p = make_mobilevit_block(ParamFactory<D>(store, rng, "mvit"),
                                  MobileVitBlockShape{4, 8, 1, 2, 16, 2, 3});
    randomize(store, rng, 0.5);
    auto x = random_tensor(rng, {1, 4, 4, 4});
    return check_module(n, store, {x}, [&] { return mobilevit_block(x, p, false); }, o);
  });
  add("lpi_block", [](const std::string& n, CounterRng& rng, const GradCheckOptions& o) {
    ParamStore<D> store;
    auto p = make_lpi(ParamFactory<D>(store, rng, "lpi"), 8);
    randomize(store, rng, 0.5);
    auto x = random_tensor(rng, {2, 16, 8});
    return check_module(n, store, {x}, [&] { return lpi_block(x, p, 4, 4, true); }, o);
  });
  add("class_attention", [](const std::string& n, CounterRng& rng,
                            const GradCheckOptions& o) {
    ParamStore<D> store;
    auto p = make_class_attention(ParamFactory<D>(store, rng, "ca"), 4, 2, 8);
    randomize(store, rng, 0.5);
    auto x = random_tensor(rng, {2, 4, 4});
    return check_module(n, store, {x}, [&] { return class_attention_block(x, p); }, o);
  });

  // ---- encoders and head ----
  add("text_encoder", [](const std::string& n, CounterRng& rng,
                         const GradCheckOptions& o) {
    ParamStore<D> store;
    auto enc = make_text_encoder(ParamFactory<D>(store, rng, "text"),
                                 TextEncoderConfig{16, 8, 1, 2, 16, 2});
    randomize(store, rng, 0.5);
    TokenBatch tokens{2, 8, {1, 5, 9, 3, 0, 0, 0, 0, 1, 15, 2, 7, 7, 4, 11, 0}};
    return check_module(n, store, {}, [&] { return enc.encode(tokens); }, o);
  });
  auto image_case = [&](std::string name, ImageEncoderConfig config) {
    add(name, [config](const std::string& n, CounterRng& rng, const GradCheckOptions& o) {
      ParamStore<D> store;
      auto enc = make_image_encoder(ParamFactory<D>(store, rng, "image"), config);
      randomize(store, rng, 0.3);
      const std::size_t s = config.input_size();
      auto x = random_tensor(rng, {2, 10, s, s});
      GradCheckOptions fewer = o;
      fewer.max_coords = std::min<std::size_t>(o.max_coords, 8);
      return check_module(n, store, {x}, [&] { return enc.encode(x, false); }, fewer);
    });
  };
  {
    ImageEncoderConfig c;
    c.kind = ImageEncoderKind::vit_tiny;
    c.arch = VitConfig{16, 8, 1, 2, 16, 2};
    image_case("vit_encoder", c);
    c.kind = ImageEncoderKind::xcit_nano;
    c.arch = XcitConfig{16, 4, 1, 2, 16, 2, 1};
    image_case("xcit_encoder", c);
    c.kind = ImageEncoderKind::mobilevit_s;
    MobileVitConfig m;
    m.input_size = 32;
    m.stem = 4;
    m.channels = {8, 16, 24, 32, 40};
    m.mv2_depths = {1, 1};
    m.dims = {36, 48, 60};
    m.depths = {1, 1, 1};
    m.heads = 2;
    m.final_channels = 160;
    m.patch = 1;
    c.arch = m;
    image_case("mobilevit_encoder", c);
  }
  add("fuse", [](const std::string& n, CounterRng& rng, const GradCheckOptions& o) {
    ParamStore<D> store;
    auto p = make_fusion(ParamFactory<D>(store, rng, "fusion"),
                         FusionConfig{4, 6, 5, Activation::tanh});
    randomize(store, rng, 0.5);
    auto t = random_tensor(rng, {2, 4});
    auto v = random_tensor(rng, {2, 6});
    return check_module(n, store, {t, v}, [&] { return fuse(t, v, p); }, o);
  });
  add("classify", [](const std::string& n, CounterRng& rng, const GradCheckOptions& o) {
    ParamStore<D> store;
    auto p = make_head(ParamFactory<D>(store, rng, "head"), 5,
                       HeadConfig{7, 3, 0.25, Activation::gelu});
    randomize(store, rng, 0.5);
    auto x = random_tensor(rng, {2, 5});
    return check_module(n, store, {x},
                        [&] { return classify(x, p, ForwardMode{true, 5}); }, o);
  });
  return cases;
}

GradCheckResult check_model_gradients(const ModelConfig& config,
                                      const GradCheckOptions& options) {
  VqaModel<D> model(config, options.seed);
  CounterRng rng(options.seed, 0x6d6f64ULL);
  randomize(model.params(), rng, 0.5);
  const std::size_t b = 2, s = config.image.input_size();
  auto images = random_tensor(rng, {b, config.image.channels, s, s}, 1.0, false);
  TokenBatch tokens{b, config.text.max_len, {}};
  for (std::size_t i = 0; i < b * tokens.length; ++i) {
    const std::size_t pos = i % tokens.length;
    const bool pad = pos > 2 + i / tokens.length;
    tokens.ids.push_back(pos == 0 ? Vocab::kCls
                         : pad    ? Vocab::kPad
                                  : static_cast<std::int32_t>(
                                        3 + rng.below(config.text.vocab_size - 3)));
  }
  std::vector<std::int32_t> targets;
  for (std::size_t i = 0; i < b; ++i)
    targets.push_back(static_cast<std::int32_t>(rng.below(config.head.answers)));
  GradCheckOptions fewer = options;
  fewer.max_coords = std::min<std::size_t>(options.max_coords, 6);
  return check_module(
      "end_to_end", model.params(), {},
      [&] { return ops::cross_entropy(model.forward(images, tokens), targets); }, fewer);
}

}  // namespace lit4
