#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lit4/cost.hpp"
#include "lit4/error.hpp"
#include "lit4/fusion.hpp"
#include "lit4/model.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lit4;
using oracle::Vec;
namespace O = lit4::ops;
using TD = Tensor<double>;

namespace {

struct FusionFixture {
  ParamStore<double> store;
  CounterRng rng{1};
  FusionParams<double> p;
  FusionFixture(std::size_t dt, std::size_t dv, std::size_t df, Activation act) {
    p = make_fusion(ParamFactory<double>(store, rng, "fusion"),
                    FusionConfig{dt, dv, df, act});
  }
};

ModelConfig toy_model(ImageEncoderKind kind) {
  auto c = ModelConfig::defaults(kind);
  c.text = {12, 8, 1, 2, 16, 2};
  if (kind == ImageEncoderKind::xcit_nano)
    c.image.arch = XcitConfig{16, 4, 1, 2, 16, 2, 1};
  else
    c.image.arch = VitConfig{16, 4, 1, 2, 16, 2};
  c.fusion.dim = 12;
  c.head.hidden = 10;
  c.head.answers = 5;
  c.sync_dims();
  return c;
}

Vocab toy_vocab() {
  std::vector<std::string> t{"[PAD]", "[CLS]", "[UNK]"};
  for (int i = 0; i < 9; ++i) t.push_back("w" + std::to_string(i));
  return Vocab(t);
}

}  // namespace

TEST_CASE("fuse: zero image feature with zero biases gives zero") {
  FusionFixture fx(4, 6, 5, Activation::tanh);
  const auto out = fuse(oracle::tensor({4}, oracle::random_vec(4, 2)), TD::zeros({6}), fx.p);
  CHECK(out.shape() == Shape{5});
  CHECK(oracle::max_abs(oracle::values(out)) == 0.0);
}

TEST_CASE("fuse: identity projections without activation is the elementwise product") {
  FusionFixture fx(3, 3, 3, Activation::identity);
  for (auto* w : {&fx.p.text_proj.weight, &fx.p.image_proj.weight}) {
    testutil::fill(*w, 0.0);
    for (std::size_t i = 0; i < 3; ++i) w->mutable_data()[i * 3 + i] = 1.0;
  }
  const Vec t = oracle::random_vec(3, 3), v = oracle::random_vec(3, 4);
  const auto out = oracle::values(fuse(oracle::tensor({3}, t), oracle::tensor({3}, v), fx.p));
  for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == t[i] * v[i]);
}

TEST_CASE("fuse: tanh on both projections, batched") {
  FusionFixture fx(4, 6, 5, Activation::tanh);
  testutil::randomize(fx.store, 5, 0.5);
  const Vec t = oracle::random_vec(8, 6), v = oracle::random_vec(12, 7);
  const auto out = oracle::values(fuse(oracle::tensor({2, 4}, t), oracle::tensor({2, 6}, v), fx.p));
  const auto wt = oracle::values(fx.p.text_proj.weight), bt = oracle::values(fx.p.text_proj.bias);
  const auto wv = oracle::values(fx.p.image_proj.weight),
             bv = oracle::values(fx.p.image_proj.bias);
  const Vec pt = oracle::matmul(t, wt, 2, 4, 5), pv = oracle::matmul(v, wv, 2, 6, 5);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < 5; ++j) {
      const double want = std::tanh(pt[r * 5 + j] + bt[j]) * std::tanh(pv[r * 5 + j] + bv[j]);
      CHECK(out[r * 5 + j] == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("fuse output width is d_f regardless of the input widths") {
  for (std::size_t dt : {1u, 7u})
    for (std::size_t dv : {2u, 9u}) {
      FusionFixture fx(dt, dv, 5, Activation::tanh);
      CHECK(fuse(TD::zeros({dt}), TD::zeros({dv}), fx.p).shape() == Shape{5});
    }
  FusionFixture fx(4, 6, 5, Activation::tanh);
  CHECK_THROWS_AS(fuse(TD::zeros({5}), TD::zeros({6}), fx.p), ConfigError);
  CHECK_THROWS_AS(FusionConfig({4, 6, 5, Activation::gelu}).validate(), ConfigError);
}

TEST_CASE("head") {
  ParamStore<double> store;
  CounterRng rng(2);
  auto head = make_head(ParamFactory<double>(store, rng, "head"), 5, HeadConfig{7, 3, 0.25,
                                                                                 Activation::gelu});
  testutil::randomize(store, 3, 0.5);
  const auto x = oracle::tensor({5}, oracle::random_vec(5, 4));

  SUBCASE("zero final weights give the bias for any input") {
    testutil::fill(head.fc2.weight, 0.0);
    const Vec b = oracle::values(head.fc2.bias);
    CHECK(oracle::values(classify(x, head)) == b);
    CHECK(oracle::values(classify(oracle::tensor({5}, oracle::random_vec(5, 9)), head)) == b);
  }
  SUBCASE("symmetric weights on symmetric input give equal logits") {
    auto sym = make_head(ParamFactory<double>(store, rng, "sym"), 4, HeadConfig{6, 2, 0.0,
                                                                                 Activation::gelu});
    testutil::fill(sym.fc1.weight, 0.3);
    auto w2 = sym.fc2.weight.mutable_data();
    for (std::size_t i = 0; i < 6; ++i) w2[i * 2] = w2[i * 2 + 1] = 0.1 * static_cast<double>(i);
    const auto l = oracle::values(classify(TD::full({4}, 0.5), sym));
    CHECK(l[0] == l[1]);
  }
  SUBCASE("matches the composition fc2(gelu(fc1(x))) in eval mode") {
    const auto want = head.fc2(O::gelu(head.fc1(x)));
    CHECK(oracle::values(classify(x, head)) == oracle::values(want));
  }
  SUBCASE("dropout only acts in training mode") {
    const auto eval = oracle::values(classify(x, head, {false, 1}));
    const auto tr1 = oracle::values(classify(x, head, {true, 1}));
    const auto tr1b = oracle::values(classify(x, head, {true, 1}));
    CHECK(tr1 == tr1b);
    CHECK(tr1 != eval);
  }
  SUBCASE("argmax is unchanged by a constant added to the final biases") {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
      const auto xi = oracle::tensor({5}, oracle::random_vec(5, trial + 100));
      const auto before = to_distributions(classify(xi, head)).front().argmax();
      auto b = head.fc2.bias.mutable_data();
      for (auto& e : b) e += 3.7;
      const auto after = to_distributions(classify(xi, head)).front().argmax();
      for (auto& e : b) e -= 3.7;
      REQUIRE(before == after);
    }
  }
}

TEST_CASE("answer distribution") {
  const auto d = to_distributions(TD({2, 3}, {0, std::log(3.0), 0, 5, 1, 1}));
  REQUIRE(d.size() == 2);
  const auto p = d[0].probabilities();
  CHECK(p[1] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d[0].argmax() == 1);
  CHECK(d[1].argmax() == 0);
}

TEST_CASE("vqa model") {
  for (auto kind : {ImageEncoderKind::vit_tiny, ImageEncoderKind::xcit_nano}) {
    const auto cfg = toy_model(kind);
    VqaModel<double> model(cfg, 3);
    testutil::randomize(model.params(), 4, 0.3);
    const auto vocab = toy_vocab();
    const auto img = oracle::tensor({10, 16, 16}, oracle::random_vec(2560, 5));
    const auto q = tokenize("w1 w4 w2", vocab, 8);

    SUBCASE("single triplet gives n_A logits, deterministically") {
      const auto a = model.forward(img, q);
      CHECK(a.shape() == Shape{5});
      CHECK(oracle::values(a) == oracle::values(model.forward(img, q)));
    }
    SUBCASE("composition of the individually tested stages") {
      const auto t = model.text().encode(q);
      const auto v = model.image().encode(img);
      const auto want = classify(fuse(t, v, model.fusion()), model.head());
      CHECK(oracle::max_abs_diff(oracle::values(model.forward(img, q)), oracle::values(want)) <
            1e-14);
    }
    SUBCASE("PAD tail does not change the logits") {
      TokenBatch shorter{1, 4, {q.ids.begin(), q.ids.begin() + 4}};
      const auto a = oracle::values(model.forward(img, q));
      const auto b = oracle::values(
          model.forward(O::reshape(img, {1, 10, 16, 16}), shorter));
      CHECK(oracle::max_abs_diff(a, b) <= 1e-12);
    }
    SUBCASE("batched forward agrees with single forwards") {
      const auto img2 = oracle::tensor({10, 16, 16}, oracle::random_vec(2560, 6));
      const auto q2 = tokenize("w0", vocab, 8);
      const auto batch = model.forward(O::concat<double>({O::reshape(img, {1, 10, 16, 16}),
                                                          O::reshape(img2, {1, 10, 16, 16})},
                                                         0),
                                       TokenBatch::stack({q, q2}));
      const auto a = oracle::values(model.forward(img, q));
      const auto b = oracle::values(model.forward(img2, q2));
      Vec both = a;
      both.insert(both.end(), b.begin(), b.end());
      CHECK(oracle::max_abs_diff(oracle::values(batch), both) < 1e-12);
    }
  }
}

TEST_CASE("vqa model: same seed, same weights; parameter names by module") {
  const auto cfg = toy_model(ImageEncoderKind::vit_tiny);
  VqaModel<float> a(cfg, 9), b(cfg, 9), c(cfg, 10);
  REQUIRE(a.params().entries().size() == b.params().entries().size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
    CHECK(oracle::values(a.params().entries()[i].tensor) ==
          oracle::values(b.params().entries()[i].tensor));
    any_diff |= oracle::values(a.params().entries()[i].tensor) !=
                oracle::values(c.params().entries()[i].tensor);
  }
  CHECK(any_diff);
  for (const auto& e : a.params().entries()) {
    const auto dot = e.name.find('.');
    const auto root = e.name.substr(0, dot);
    CHECK((root == "text" || root == "image" || root == "fusion" || root == "head"));
  }
}

TEST_CASE("fusion and head parameter budget closed form") {
  const auto cfg = ModelConfig::defaults(ImageEncoderKind::xcit_nano);
  const auto report = count_params(cfg);
  const std::uint64_t dt = 128, dv = 128, df = 512, hid = 512, na = 1000;
  CHECK(report.params_under("fusion") == dt * df + df + dv * df + df);
  CHECK(report.params_under("head") == df * hid + hid + hid * na + na);
}
