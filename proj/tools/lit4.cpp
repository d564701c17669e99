// lit4: cost analysis, training, prediction and gradient checks for the
// transformer VQA models.
//
// Exit codes: 0 ok, 2 usage/config/input errors, 3 numeric failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lit4/cost.hpp"
#include "lit4/error.hpp"
#include "lit4/gradcheck.hpp"
#include "lit4/io.hpp"
#include "lit4/model.hpp"
#include "lit4/tape.hpp"
#include "lit4/train.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace lit4;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

ConfigFile config_or_default(const std::string& path) {
  return path.empty() ? ConfigFile{} : load_config(path);
}

// ---- analyze -----------------------------------------------------------------

struct AnalyzeArgs {
  std::string config;
  std::string kind;
  std::size_t input_size = 0;
  std::size_t question_tokens = 0;
  std::string format = "tsv";
};

int cmd_analyze(const AnalyzeArgs& a) {
  ConfigFile cfg;
  if (!a.config.empty()) {
    cfg = load_config(a.config);
  } else {
    const auto kind = a.kind.empty() ? ImageEncoderKind::xcit_nano
                                     : parse_image_encoder_kind(a.kind);
    cfg.model = ModelConfig::defaults(kind);
  }
  const auto report = count_flops(cfg.model, {a.input_size, a.question_tokens});
  if (a.format == "json") {
    std::cout << report.to_json();
  } else {
    std::cout << report.to_tsv();
    std::cout << "# " << to_string(cfg.model.image.kind) << ": "
              << fmt(static_cast<double>(report.total_params) / 1e6, 3) << " M params, "
              << fmt(static_cast<double>(report.total_flops) / 1e9, 3) << " GFLOPs at "
              << report.input_size << "x" << report.input_size << ", "
              << report.text_tokens << " question tokens\n";
  }
  return kExitOk;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string manifest;
  std::string out;
  std::string trace;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::string format = "text";
  bool quiet = false;
};

ojson metrics_json(const EvalMetrics& m) {
  ojson j;
  j["samples"] = m.per_type[0].total + m.per_type[1].total;
  j["overall_accuracy"] = m.overall_accuracy();
  for (auto type : {QuestionType::yes_no, QuestionType::lulc}) {
    const auto& c = m.per_type[static_cast<std::size_t>(type)];
    if (c.total) j[to_string(type) + "_accuracy"] = m.type_accuracy(type);
  }
  if (m.per_type[0].total && m.per_type[1].total) j["average_accuracy"] = m.average_accuracy();
  return j;
}

std::string metrics_text(const EvalMetrics& m) {
  std::ostringstream os;
  os << "OA " << fmt(m.overall_accuracy());
  for (auto type : {QuestionType::yes_no, QuestionType::lulc}) {
    const auto& c = m.per_type[static_cast<std::size_t>(type)];
    if (c.total)
      os << "  " << to_string(type) << " " << fmt(m.type_accuracy(type)) << " (" << c.correct
         << "/" << c.total << ")";
  }
  if (m.per_type[0].total && m.per_type[1].total) os << "  AA " << fmt(m.average_accuracy());
  return os.str();
}

int cmd_train(const TrainArgs& a) {
  auto cfg = config_or_default(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.steps) {
    cfg.train.total_steps = *a.steps;
    cfg.train.validate();
  }
  const auto data = load_manifest(a.manifest);
  const auto train_idx = data.indices(Split::train);
  const auto test_idx = data.indices(Split::test);
  if (train_idx.empty()) throw InputError(a.manifest + ": no training samples");

  VqaModel<float> model(cfg.model, cfg.train.seed, cfg.train.init_std);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t every = std::max<std::size_t>(1, cfg.train.total_steps / 10);
  auto result = train(model, data, train_idx, cfg.train, [&](const TraceRow& r) {
    if (!a.quiet && (r.step == 1 || r.step % every == 0))
      std::cerr << "step " << r.step << "  lr " << r.lr << "  loss " << fmt(r.loss) << "\n";
  });
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  save_weights(a.out, model.params());
  const std::string trace_path = a.trace.empty() ? a.out + ".trace.csv" : a.trace;
  write_file(trace_path, trace_csv(result.trace));

  const auto train_metrics = evaluate(model, data, train_idx);
  std::optional<EvalMetrics> test_metrics;
  if (!test_idx.empty()) test_metrics = evaluate(model, data, test_idx);

  if (a.format == "json") {
    ojson j;
    j["weights"] = a.out;
    j["trace"] = trace_path;
    j["steps"] = cfg.train.total_steps;
    j["final_loss"] = result.trace.back().loss;
    j["seconds"] = seconds;
    j["train"] = metrics_json(train_metrics);
    if (test_metrics) j["held_out"] = metrics_json(*test_metrics);
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "trained " << cfg.train.total_steps << " steps in " << fmt(seconds, 1)
              << " s, final loss " << fmt(result.trace.back().loss) << "\n";
    std::cout << "train     " << metrics_text(train_metrics) << "\n";
    if (test_metrics)
      std::cout << "held-out  " << metrics_text(*test_metrics) << "\n";
    else
      std::cout << "held-out  (no test split in manifest)\n";
    std::cout << "weights   " << a.out << "\ntrace     " << trace_path << "\n";
  }
  return kExitOk;
}

// ---- predict -----------------------------------------------------------------

struct PredictArgs {
  std::string config;
  std::string weights;
  std::string image;
  std::string question;
  std::string manifest;
  std::string vocab;
  std::string answers;
  bool all = false;
  std::string format = "text";
};

int cmd_predict(const PredictArgs& a) {
  auto cfg = config_or_default(a.config);
  std::vector<std::string> vocab_tokens, answers;
  if (!a.manifest.empty()) {
    const auto base = fs::path(a.manifest).parent_path();
    const auto doc = nlohmann::json::parse(read_file(a.manifest));
    vocab_tokens = read_lines(base / doc.at("vocab").get<std::string>());
    answers = read_lines(base / doc.at("answers").get<std::string>());
  } else {
    if (a.vocab.empty() || a.answers.empty())
      throw InputError("predict needs --manifest or both --vocab and --answers");
    vocab_tokens = read_lines(a.vocab);
    answers = read_lines(a.answers);
  }
  if (answers.size() != cfg.model.head.answers)
    throw ConfigError("head.answers (" + std::to_string(cfg.model.head.answers) +
                      ") does not match the answer list (" + std::to_string(answers.size()) +
                      ")");
  const Vocab vocab(vocab_tokens);

  VqaModel<float> model(cfg.model, 0);
  load_weights(a.weights, model.params());

  const auto img = read_image(a.image);
  Tensor<float> image({img.bands, img.height, img.width}, img.data);
  const auto tokens = tokenize(a.question, vocab, cfg.model.text.max_len);
  const auto dist = to_distributions(model.forward(image, tokens)).front();
  const auto probs = dist.probabilities();
  const auto best = dist.argmax();

  if (a.format == "json") {
    ojson j;
    j["answer"] = answers[best];
    j["probability"] = probs[best];
    if (a.all) {
      ojson all = ojson::object();
      for (std::size_t i = 0; i < answers.size(); ++i) all[answers[i]] = probs[i];
      j["distribution"] = all;
    }
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << answers[best] << "\t" << std::setprecision(6) << probs[best] << "\n";
    if (a.all) {
      double total = 0.0;
      for (std::size_t i = 0; i < answers.size(); ++i) {
        std::cout << "  " << answers[i] << "\t" << probs[i] << "\n";
        total += probs[i];
      }
      std::cout << "  (sum " << std::setprecision(12) << total << ")\n";
    }
  }
  return kExitOk;
}

// ---- gradcheck ---------------------------------------------------------------

struct GradcheckArgs {
  std::string config;
  bool ops = false;
  bool end_to_end = false;
  std::string corrupt;
  double tolerance = 1e-4;
  std::string filter;
  std::string format = "text";
};

int cmd_gradcheck(const GradcheckArgs& a) {
  GradCheckOptions opts;
  opts.tolerance = a.tolerance;
  opts.fault_op = a.corrupt;
  std::vector<GradCheckResult> results;
  const bool run_ops = a.ops || !a.end_to_end;
  if (run_ops) {
    for (const auto& c : op_suite()) {
      if (!a.filter.empty() && c.name.find(a.filter) == std::string::npos) continue;
      results.push_back(c.run(opts));
      if (a.format != "json") {
        const auto& r = results.back();
        std::cout << (r.passed ? "PASS" : "FAIL") << "  " << std::left << std::setw(24)
                  << r.name << " max_rel_err " << std::scientific << std::setprecision(3)
                  << r.max_error << std::defaultfloat << "  (" << r.coords << " coords)\n";
      }
    }
  }
  if (a.end_to_end) {
    auto cfg = config_or_default(a.config);
    results.push_back(check_model_gradients(cfg.model, opts));
    if (a.format != "json") {
      const auto& r = results.back();
      std::cout << (r.passed ? "PASS" : "FAIL") << "  " << std::left << std::setw(24)
                << r.name << " max_rel_err " << std::scientific << std::setprecision(3)
                << r.max_error << std::defaultfloat << "  (" << r.coords << " coords)\n";
    }
  }
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.passed;
  if (a.format == "json") {
    ojson j;
    j["tolerance"] = a.tolerance;
    auto& list = j["results"] = ojson::array();
    for (const auto& r : results)
      list.push_back({{"name", r.name},
                      {"max_error", r.max_error},
                      {"coords", r.coords},
                      {"passed", r.passed}});
    j["failed"] = failed;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << results.size() - failed << "/" << results.size() << " passed\n";
  }
  return failed ? kExitNumeric : kExitOk;
}

// ---- generate ----------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  std::size_t count = 64;
  std::size_t test = 0;
  std::size_t size = 16;
  std::size_t classes = 3;
  double noise = 0.1;
  std::uint64_t seed = 42;
};

int cmd_generate(const GenerateArgs& a) {
  auto data = generate_synthetic(a.count + a.test, {a.size, a.classes, a.noise}, a.seed);
  for (std::size_t i = a.count; i < data.samples.size(); ++i)
    data.samples[i].split = Split::test;
  write_dataset(a.out, data);
  std::cout << "wrote " << data.samples.size() << " samples (" << a.count << " train, "
            << a.test << " test) to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer visual question answering: cost analysis, training, prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lit4 1.0");

  auto check_format = CLI::IsMember({"text", "tsv", "json"});

  AnalyzeArgs analyze;
  auto* an = app.add_subcommand("analyze", "Parameter and FLOP breakdown of a configuration");
  an->add_option("config", analyze.config, "Model config JSON (default: built-in defaults)");
  an->add_option("--kind", analyze.kind, "Encoder defaults when no config is given")
      ->check(CLI::IsMember({"vit_tiny", "mobilevit_s", "xcit_nano", "vit_base"}));
  an->add_option("--input-size", analyze.input_size, "Image side length (default: config)");
  an->add_option("--question-tokens", analyze.question_tokens,
                 "Question length costed (default: text_encoder.max_len)");
  an->add_option("--format", analyze.format, "tsv or json")->check(check_format);

  TrainArgs tr;
  auto* tn = app.add_subcommand("train", "Train end to end on a dataset manifest");
  tn->add_option("config", tr.config, "Model/train config JSON")->required();
  tn->add_option("manifest", tr.manifest, "Dataset manifest JSON")->required();
  tn->add_option("--out,-o", tr.out, "Weight archive to write")->required();
  tn->add_option("--trace", tr.trace, "Loss trace CSV (default: <out>.trace.csv)");
  tn->add_option("--seed", tr.seed, "Overrides train.seed");
  tn->add_option("--steps", tr.steps, "Overrides train.total_steps");
  tn->add_option("--format", tr.format, "text or json")->check(check_format);
  tn->add_flag("--quiet,-q", tr.quiet, "No progress lines on stderr");

  PredictArgs pr;
  auto* pd = app.add_subcommand("predict", "Answer one question about one image");
  pd->add_option("config", pr.config, "Model config JSON")->required();
  pd->add_option("--weights,-w", pr.weights, "Weight archive")->required();
  pd->add_option("--image,-i", pr.image, "L4IM image file")->required();
  pd->add_option("--question,-q", pr.question, "Question text")->required();
  pd->add_option("--manifest", pr.manifest, "Take vocab and answers from this manifest");
  pd->add_option("--vocab", pr.vocab, "Vocabulary file, one token per line");
  pd->add_option("--answers", pr.answers, "Answer list, one per line");
  pd->add_flag("--all", pr.all, "Print the full answer distribution");
  pd->add_option("--format", pr.format, "text or json")->check(check_format);

  GradcheckArgs gc;
  auto* gk = app.add_subcommand("gradcheck", "Finite-difference gradient checks in f64");
  gk->add_option("config", gc.config, "Model config for --end-to-end");
  gk->add_flag("--ops", gc.ops, "Run the per-operation suite (default without --end-to-end)");
  gk->add_flag("--end-to-end", gc.end_to_end, "Check the whole model of the config");
  gk->add_option("--corrupt", gc.corrupt, "Scale the backward of this op (test hook)");
  gk->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  gk->add_option("--filter", gc.filter, "Only cases whose name contains this");
  gk->add_option("--format", gc.format, "text or json")->check(check_format);

  GenerateArgs gen;
  auto* gn = app.add_subcommand("generate", "Write a synthetic dataset");
  gn->add_option("out", gen.out, "Output directory")->required();
  gn->add_option("--count", gen.count, "Training samples");
  gn->add_option("--test", gen.test, "Extra held-out samples");
  gn->add_option("--size", gen.size, "Image side length");
  gn->add_option("--classes", gen.classes, "Number of land-cover classes (1..10)");
  gn->add_option("--noise", gen.noise, "Gaussian noise std");
  gn->add_option("--seed", gen.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*an) return cmd_analyze(analyze);
    if (*tn) return cmd_train(tr);
    if (*pd) return cmd_predict(pr);
    if (*gk) return cmd_gradcheck(gc);
    if (*gn) return cmd_generate(gen);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const lit4::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
