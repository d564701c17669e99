#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>

#include "lit4/error.hpp"
#include "lit4/io.hpp"
#include "lit4/train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lit4;
using oracle::Vec;

namespace {

TrainConfig schedule(double lr, std::size_t warmup, std::size_t total) {
  TrainConfig c;
  c.base_lr = lr;
  c.warmup_steps = warmup;
  c.total_steps = total;
  return c;
}

ModelConfig toy_model(std::size_t vocab, std::size_t answers) {
  auto c = ModelConfig::defaults(ImageEncoderKind::vit_tiny);
  c.text = {vocab, 8, 1, 2, 32, 2};
  c.image.arch = VitConfig{16, 4, 2, 2, 32, 2};
  c.fusion.dim = 32;
  c.head = {32, answers, 0.25, Activation::gelu};
  c.sync_dims();
  return c;
}

// A blank sample; only its label and question type matter to the metric
// tests.
VqaSample labelled(QuestionType type, std::int32_t answer) {
  VqaSample s;
  s.height = s.width = 16;
  s.image.assign(10 * 16 * 16, 0.0f);
  s.question = "is class 0 present";
  s.type = type;
  s.answer = answer;
  return s;
}

}  // namespace

TEST_CASE("learning rate schedule") {
  const auto c = schedule(5e-4, 100, 1000);
  CHECK(lr_at(0, c) == 0.0);
  CHECK(lr_at(100, c) == 5e-4);
  CHECK(lr_at(1000, c) == 0.0);
  CHECK(lr_at(550, c) == doctest::Approx(2.5e-4).epsilon(1e-12));
  CHECK(lr_at(50, c) == doctest::Approx(2.5e-4).epsilon(1e-15));
  // Continuous at the end of warmup: both sides move by at most one step
  // of their own formula.
  CHECK(lr_at(100, c) - lr_at(99, c) == doctest::Approx(5e-4 / 100).epsilon(1e-12));
  const double cosine_step = 5e-4 * std::pow(std::sin(std::numbers::pi / 1800), 2);
  CHECK(lr_at(100, c) - lr_at(101, c) == doctest::Approx(cosine_step).epsilon(1e-6));
  // Nonincreasing after warmup.
  for (std::size_t s = 100; s < 1000; ++s) REQUIRE(lr_at(s + 1, c) <= lr_at(s, c));
  CHECK_THROWS_AS(lr_at(1001, c), ParameterError);
  CHECK_THROWS_AS(schedule(5e-4, 1000, 1000).validate(), ConfigError);
}

TEST_CASE("adamw: first step and decoupled decay on matrices only") {
  ParamStore<double> store;
  auto vec = store.add("v", Tensor<double>({2}, {1.0, -2.0}, true), TensorRole::parameter);
  auto mat = store.add("m", Tensor<double>({1, 2}, {1.0, -2.0}, true), TensorRole::parameter);
  for (auto* t : {&vec, &mat}) {
    auto g = t->mutable_grad();
    g[0] = 0.5;
    g[1] = -3.0;
  }
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  cfg.adam_eps = 1e-8;
  AdamW<double> opt(store, cfg);
  opt.step(0.01);
  // Bias-corrected first step: m_hat = g, v_hat = g^2.
  const double u0 = 0.5 / (0.5 + 1e-8), u1 = -3.0 / (3.0 + 1e-8);
  CHECK(vec.data()[0] == doctest::Approx(1.0 - 0.01 * u0).epsilon(1e-14));
  CHECK(vec.data()[1] == doctest::Approx(-2.0 - 0.01 * u1).epsilon(1e-14));
  CHECK(mat.data()[0] == doctest::Approx(1.0 - 0.01 * (u0 + 0.1 * 1.0)).epsilon(1e-14));
  CHECK(mat.data()[1] == doctest::Approx(-2.0 - 0.01 * (u1 + 0.1 * -2.0)).epsilon(1e-14));
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("metrics: hand-counted oracles") {
  auto make = [](std::size_t yn_ok, std::size_t yn, std::size_t lc_ok, std::size_t lc) {
    EvalMetrics m;
    for (std::size_t i = 0; i < yn; ++i) m.add(QuestionType::yes_no, i < yn_ok);
    for (std::size_t i = 0; i < lc; ++i) m.add(QuestionType::lulc, i < lc_ok);
    return m;
  };
  const auto all = make(4, 4, 3, 3);
  CHECK(all.overall_accuracy() == 1.0);
  CHECK(all.average_accuracy() == 1.0);

  const auto equal = make(9, 10, 1, 10);
  CHECK(equal.type_accuracy(QuestionType::yes_no) == 0.9);
  CHECK(equal.type_accuracy(QuestionType::lulc) == 0.1);
  CHECK(equal.average_accuracy() == 0.5);
  CHECK(equal.overall_accuracy() == 0.5);

  const auto unbalanced = make(8, 10, 2, 5);
  CHECK(unbalanced.overall_accuracy() == 10.0 / 15.0);
  CHECK(unbalanced.average_accuracy() == 0.6);
  CHECK(unbalanced.overall_accuracy() != unbalanced.average_accuracy());

  CHECK_THROWS_AS(EvalMetrics{}.overall_accuracy(), MetricError);
  CHECK_THROWS_AS(make(1, 1, 0, 0).average_accuracy(), MetricError);
}

TEST_CASE("evaluate reproduces the unbalanced hand count through a model") {
  VqaDataset data;
  data.vocab = synthetic_vocab(3);
  data.answers = synthetic_answers(3);
  for (int i = 0; i < 10; ++i) data.samples.push_back(labelled(QuestionType::yes_no, i < 8 ? 0 : 1));
  for (int i = 0; i < 5; ++i) data.samples.push_back(labelled(QuestionType::lulc, i < 2 ? 0 : 5));
  VqaModel<float> model(toy_model(data.vocab.size(), data.answers.size()), 1);
  // Constant head: always answer 0.
  auto w = model.head().fc2.weight;
  auto b = model.head().fc2.bias;
  testutil::fill(w, 0.0);
  testutil::fill(b, 0.0);
  b.mutable_data()[0] = 1.0f;

  const auto idx = data.indices(Split::train);
  const auto m = evaluate(model, data, idx);
  CHECK(m.overall_accuracy() == 10.0 / 15.0);
  CHECK(m.average_accuracy() == 0.6);

  ::setenv("LIT4_THREADS", "3", 1);
  CHECK(worker_count() == 3);
  const auto threaded = evaluate(model, data, idx);
  ::unsetenv("LIT4_THREADS");
  CHECK(threaded.per_type[0].correct == m.per_type[0].correct);
  CHECK(threaded.per_type[1].correct == m.per_type[1].correct);
}

TEST_CASE("synthetic generator") {
  SUBCASE("same seed, same data") {
    const auto a = generate_synthetic(20, {}, 5), b = generate_synthetic(20, {}, 5);
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(a.samples[i].image == b.samples[i].image);
      CHECK(a.samples[i].answer == b.samples[i].answer);
    }
    CHECK(generate_synthetic(20, {}, 6).samples[3].image != a.samples[3].image);
  }
  SUBCASE("answers follow the images") {
    const SyntheticSpec layout{16, 4, 0.1};
    const auto d = generate_synthetic(400, layout, 7);
    CHECK(d.answers.size() == 2 + 16);
    bool saw_class3_yes = false;
    for (const auto& s : d.samples) {
      // Recover the class set from the signature bands: class c raises band
      // c inside rows [4c, 4c + 4).
      std::uint32_t mask = 0;
      for (std::size_t c = 0; c < 4; ++c) {
        double mean = 0;
        for (std::size_t y = 4 * c; y < 4 * c + 4; ++y)
          for (std::size_t x = 0; x < 16; ++x) mean += s.image[(c * 16 + y) * 16 + x];
        if (mean / 64 > 0.5) mask |= 1u << c;
      }
      if (s.type == QuestionType::yes_no) {
        const auto cls = static_cast<std::uint32_t>(s.question[9] - '0');
        const bool yes = (mask >> cls) & 1u;
        REQUIRE(d.answers[static_cast<std::size_t>(s.answer)] == (yes ? "yes" : "no"));
        if (cls == 3 && yes) {
          CHECK(s.question == "is class 3 present");
          saw_class3_yes = true;
        }
      } else {
        REQUIRE(d.answers[static_cast<std::size_t>(s.answer)] == class_set_answer(mask, 4));
      }
    }
    CHECK(saw_class3_yes);
  }
  SUBCASE("balance over 10k samples") {
    const auto d = generate_synthetic(10000, {8, 3, 0.1}, 8);
    std::size_t yn = 0, yes = 0;
    for (const auto& s : d.samples)
      if (s.type == QuestionType::yes_no) {
        ++yn;
        yes += s.answer == 0;
      }
    CHECK(std::abs(static_cast<double>(yn) / 10000 - 0.5) <= 0.03);
    CHECK(std::abs(static_cast<double>(yes) / static_cast<double>(yn) - 0.5) <= 0.03);
  }
  SUBCASE("class-set answer strings") {
    CHECK(class_set_answer(0, 3) == "none");
    CHECK(class_set_answer(5, 3) == "class 0 and class 2");
    CHECK(synthetic_answers(2) ==
          std::vector<std::string>{"yes", "no", "none", "class 0", "class 1", "class 0 and class 1"});
  }
}

TEST_CASE("training: trace, determinism and null updates") {
  const auto data = generate_synthetic(32, {16, 3, 0.1}, 42);
  const auto idx = data.indices(Split::train);
  const auto cfg = toy_model(data.vocab.size(), data.answers.size());
  TrainConfig tc = schedule(1e-3, 5, 20);
  tc.batch_size = 8;
  tc.seed = 3;

  SUBCASE("first loss is near ln(n_A), steps numbered from 1") {
    VqaModel<float> model(cfg, tc.seed);
    const auto r = train(model, data, idx, tc);
    REQUIRE(r.trace.size() == 20);
    CHECK(r.trace.front().step == 1);
    CHECK(r.trace.front().lr == lr_at(1, tc));
    CHECK(std::abs(r.trace.front().loss - std::log(10.0)) < 0.1);
    const auto csv = trace_csv(r.trace);
    CHECK(csv.rfind("step,lr,loss\n", 0) == 0);
  }
  SUBCASE("same seed gives identical traces and weights") {
    VqaModel<float> a(cfg, tc.seed), b(cfg, tc.seed);
    const auto ra = train(a, data, idx, tc), rb = train(b, data, idx, tc);
    CHECK(trace_csv(ra.trace) == trace_csv(rb.trace));
    CHECK(encode_archive(archive_from_store(a.params())) ==
          encode_archive(archive_from_store(b.params())));
    auto other = tc;
    other.seed = 4;
    VqaModel<float> c(cfg, other.seed);
    CHECK(trace_csv(train(c, data, idx, other).trace) != trace_csv(ra.trace));
  }
  SUBCASE("lr = 0 leaves every learnable tensor unchanged") {
    auto zero = tc;
    zero.base_lr = 0.0;
    VqaModel<float> model(cfg, tc.seed);
    std::vector<Vec> before;
    for (const auto& e : model.params().entries()) before.push_back(oracle::values(e.tensor));
    (void)train(model, data, idx, zero);
    const auto& entries = model.params().entries();
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].role == TensorRole::parameter)
        CHECK(oracle::values(entries[i].tensor) == before[i]);
  }
  SUBCASE("loss goes down") {
    auto longer = tc;
    longer.total_steps = 120;
    longer.warmup_steps = 10;
    longer.init_std = 0.2;
    VqaModel<float> model(cfg, longer.seed, longer.init_std);
    const auto r = train(model, data, idx, longer);
    double first = 0, last = 0;
    for (std::size_t i = 0; i < 10; ++i) {
      first += r.trace[i].loss;
      last += r.trace[r.trace.size() - 1 - i].loss;
    }
    CHECK(last < 0.5 * first);
  }
}

TEST_CASE("training errors") {
  const auto data = generate_synthetic(8, {16, 3, 0.1}, 1);
  const auto idx = data.indices(Split::train);
  TrainConfig tc = schedule(1e-3, 1, 3);
  SUBCASE("answer count mismatch") {
    VqaModel<float> model(toy_model(data.vocab.size(), 7), 0);
    CHECK_THROWS_AS(train(model, data, idx, tc), ConfigError);
  }
  SUBCASE("vocabulary mismatch") {
    VqaModel<float> model(toy_model(50, data.answers.size()), 0);
    CHECK_THROWS_AS(train(model, data, idx, tc), ConfigError);
  }
  SUBCASE("non-finite loss aborts") {
    VqaModel<float> model(toy_model(data.vocab.size(), data.answers.size()), 0);
    auto b = model.head().fc2.bias;
    b.mutable_data()[0] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(train(model, data, idx, tc), NumericError);
  }
  SUBCASE("empty index list") {
    VqaModel<float> model(toy_model(data.vocab.size(), data.answers.size()), 0);
    CHECK_THROWS_AS(train(model, data, {}, tc), InputError);
  }
}
