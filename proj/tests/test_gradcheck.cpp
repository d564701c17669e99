#include <doctest.h>

#include <set>

#include "lit4/error.hpp"
#include "lit4/gradcheck.hpp"
#include "lit4/ops.hpp"
#include "oracles.hpp"

using namespace lit4;
namespace O = lit4::ops;
using TD = Tensor<double>;
using V = std::vector<TD>;
using ops::Activation;

namespace {

ModelConfig toy(ImageEncoderKind kind) {
  auto c = ModelConfig::defaults(kind);
  c.text = {12, 8, 1, 2, 8, 2};
  if (kind == ImageEncoderKind::xcit_nano)
    c.image.arch = XcitConfig{8, 4, 1, 2, 8, 2, 1};
  else
    c.image.arch = VitConfig{8, 4, 1, 2, 8, 2};
  c.fusion.dim = 6;
  c.head = {6, 4, 0.25, Activation::gelu};
  c.sync_dims();
  return c;
}

const GradCase& find_case(const std::vector<GradCase>& suite, const std::string& name) {
  for (const auto& c : suite)
    if (c.name == name) return c;
  FAIL("no case named " << name);
  return suite.front();
}

}  // namespace

TEST_CASE("check_gradients on closed-form functions") {
  const TD x = oracle::tensor({4}, oracle::random_vec(4, 1), true);
  const TD y = oracle::tensor({4}, oracle::random_vec(4, 2), true);
  const auto r = check_gradients("x*y+tanh(x)",
                                 [](const V& v) { return O::add(O::mul(v[0], v[1]), O::tanh(v[0])); },
                                 {x, y});
  CHECK(r.passed);
  CHECK(r.coords == 8);
  CHECK(r.max_error < 1e-7);

  // Large tensors are subsampled.
  const TD big = oracle::tensor({200}, oracle::random_vec(200, 3), true);
  GradCheckOptions few;
  few.max_coords = 10;
  CHECK(check_gradients("sq", [](const V& v) { return O::mul(v[0], v[0]); }, {big}, few).coords ==
        10);

  const TD frozen = oracle::tensor({4}, oracle::random_vec(4, 1), false);
  CHECK_THROWS_AS(check_gradients("f", [](const V& v) { return v[0]; }, {frozen}), ContractError);
}

TEST_CASE("a scaled backward is caught") {
  const TD x = oracle::tensor({3, 4}, oracle::random_vec(12, 4), true);
  const TD w = oracle::tensor({4, 2}, oracle::random_vec(8, 5), true);
  GradCheckOptions bad;
  bad.fault_op = "matmul";
  const auto f = [](const V& v) { return O::tanh(O::matmul(v[0], v[1])); };
  CHECK(check_gradients("clean", f, {x, w}).passed);
  const auto r = check_gradients("faulty", f, {x, w}, bad);
  CHECK_FALSE(r.passed);
  CHECK(r.max_error == doctest::Approx(0.5 / 1.5).epsilon(1e-3));
}

TEST_CASE("operation suite passes") {
  const auto suite = op_suite();
  std::set<std::string> names;
  for (const auto& c : suite) names.insert(c.name);
  CHECK(names.size() == suite.size());
  for (const char* required : {"matmul", "softmax_last", "layer_norm", "gelu", "conv2d", "msa",
                               "xca", "transformer_block", "mobilevit_block", "class_attention",
                               "text_encoder", "fuse", "classify", "cross_entropy"})
    CHECK_MESSAGE(names.count(required) == 1, required);
  for (const auto& c : suite) {
    const auto r = c.run({});
    INFO(r.name << " error " << r.max_error);
    CHECK(r.passed);
  }
}

TEST_CASE("corrupting one backward fails exactly the cases that use it") {
  const auto suite = op_suite();
  struct Row {
    const char* op;
    const char* fails;
    const char* unaffected;
  };
  for (const auto& row : {Row{"matmul", "matmul", "tanh"}, Row{"softmax", "softmax_last", "gelu"},
                          Row{"layer_norm", "layer_norm", "softmax_last"},
                          Row{"gelu", "gelu", "silu"}, Row{"conv2d", "conv2d", "layer_norm"}}) {
    GradCheckOptions o;
    o.fault_op = row.op;
    INFO("fault " << row.op);
    CHECK_FALSE(find_case(suite, row.fails).run(o).passed);
    CHECK(find_case(suite, row.unaffected).run(o).passed);
  }
}

TEST_CASE("end-to-end parameter gradients of toy models") {
  for (auto kind : {ImageEncoderKind::vit_tiny, ImageEncoderKind::xcit_nano}) {
    INFO(to_string(kind));
    const auto r = check_model_gradients(toy(kind));
    INFO("error " << r.max_error);
    CHECK(r.passed);
    CHECK(r.coords > 100);
    GradCheckOptions o;
    o.fault_op = "layer_norm";
    CHECK_FALSE(check_model_gradients(toy(kind), o).passed);
  }
}
