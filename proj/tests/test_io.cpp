#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include <json.hpp>

#include "lit4/error.hpp"
#include "lit4/io.hpp"
#include "lit4/model.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lit4;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("lit4_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<ArchiveTensor> sample_archive() {
  return {{"a.weight", DType::f32, {2, 3}, {1, -2, 3.5, 0, 1e-3, -7}},
          {"b", DType::f64, {1}, {0.1}},
          {"c.scalar", DType::f64, {}, {std::numeric_limits<double>::denorm_min()}}};
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (std::uint32_t{b[at + 3]} << 24);
}

}  // namespace

TEST_CASE("archive layout is the documented little-endian format") {
  const std::vector<ArchiveTensor> one{{"w", DType::f32, {2}, {1.0, -2.0}}};
  const auto bytes = encode_archive(one);
  REQUIRE(bytes.size() == 4 + 4 + 4 + 2 + 1 + 1 + 1 + 4 + 2 * 4);
  CHECK(std::memcmp(bytes.data(), "LIT4", 4) == 0);
  CHECK(read_u32(bytes, 4) == 1);   // version
  CHECK(read_u32(bytes, 8) == 1);   // tensor count
  CHECK(bytes[12] == 1);            // name length, low byte
  CHECK(bytes[13] == 0);
  CHECK(bytes[14] == 'w');
  CHECK(bytes[15] == 0);            // f32
  CHECK(bytes[16] == 1);            // rank
  CHECK(read_u32(bytes, 17) == 2);  // dim
  CHECK(read_u32(bytes, 21) == 0x3f800000u);
  CHECK(read_u32(bytes, 25) == 0xc0000000u);
}

TEST_CASE("archive round trip is exact") {
  const auto a = sample_archive();
  const auto back = decode_archive(encode_archive(a));
  REQUIRE(back.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back[i].name == a[i].name);
    CHECK(back[i].dtype == a[i].dtype);
    CHECK(back[i].shape == a[i].shape);
    for (std::size_t k = 0; k < a[i].values.size(); ++k) {
      const double want = a[i].dtype == DType::f32 ? static_cast<double>(static_cast<float>(a[i].values[k]))
                                                   : a[i].values[k];
      CHECK(back[i].values[k] == want);
    }
  }
}

TEST_CASE("malformed archives are format errors") {
  const auto good = encode_archive(sample_archive());
  SUBCASE("every truncation") {
    for (std::size_t n = 0; n < good.size(); ++n) {
      std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<long>(n));
      REQUIRE_THROWS_AS(decode_archive(cut), FormatError);
    }
  }
  SUBCASE("trailing bytes") {
    auto extra = good;
    extra.push_back(0);
    CHECK_THROWS_AS(decode_archive(extra), FormatError);
  }
  SUBCASE("bad magic and version") {
    auto bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_archive(bad), FormatError);
    bad = good;
    bad[4] = 2;
    CHECK_THROWS_AS(decode_archive(bad), FormatError);
  }
  SUBCASE("duplicate names") {
    auto dup = sample_archive();
    dup[1].name = dup[0].name;
    CHECK_THROWS_AS(decode_archive(encode_archive(dup)), FormatError);
  }
  SUBCASE("unknown dtype") {
    auto bad = good;
    bad[4 + 4 + 4 + 2 + 8] = 7;  // dtype byte of "a.weight"
    CHECK_THROWS_AS(decode_archive(bad), FormatError);
  }
}

TEST_CASE("model weights round-trip bit-exactly through a file") {
  TempDir dir("weights");
  auto cfg = ModelConfig::defaults(ImageEncoderKind::xcit_nano);
  cfg.text = {12, 8, 1, 2, 16, 2};
  cfg.image.arch = XcitConfig{16, 4, 1, 2, 16, 2, 1};
  cfg.fusion.dim = 8;
  cfg.head = {8, 4, 0.25, Activation::gelu};
  cfg.sync_dims();
  VqaModel<float> a(cfg, 1);
  testutil::randomize(a.params(), 2, 0.7);
  const auto file = dir.path / "m.lit4";
  save_weights(file, a.params());

  VqaModel<float> b(cfg, 99);
  load_weights(file, b.params());
  const auto& ea = a.params().entries();
  const auto& eb = b.params().entries();
  REQUIRE(ea.size() == eb.size());
  for (std::size_t i = 0; i < ea.size(); ++i) {
    REQUIRE(ea[i].name == eb[i].name);
    const auto da = ea[i].tensor.data(), db = eb[i].tensor.data();
    CHECK(std::memcmp(da.data(), db.data(), da.size() * sizeof(float)) == 0);
  }
  // Saving again gives the same bytes.
  const auto file2 = dir.path / "m2.lit4";
  save_weights(file2, b.params());
  CHECK(read_file(file) == read_file(file2));

  // f64 stores keep full precision.
  VqaModel<double> c(cfg, 3);
  testutil::randomize(c.params(), 4, 0.7);
  const auto arch = archive_from_store(c.params());
  VqaModel<double> d(cfg, 5);
  load_into_store(decode_archive(encode_archive(arch)), d.params());
  CHECK(oracle::values(c.params().entries()[5].tensor) ==
        oracle::values(d.params().entries()[5].tensor));
}

TEST_CASE("loading into a mismatched model names the first bad tensor") {
  auto cfg = ModelConfig::defaults(ImageEncoderKind::vit_tiny);
  cfg.text = {12, 8, 1, 2, 16, 2};
  cfg.image.arch = VitConfig{16, 4, 1, 2, 16, 2};
  cfg.fusion.dim = 8;
  cfg.head = {8, 4, 0.25, Activation::gelu};
  cfg.sync_dims();
  VqaModel<float> a(cfg, 1);
  auto arch = archive_from_store(a.params());

  auto wider = cfg;
  wider.head.hidden = 9;
  VqaModel<float> b(wider, 1);
  try {
    load_into_store(arch, b.params());
    FAIL("expected a DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("head.fc1.weight") != std::string::npos);
  }
  arch.pop_back();
  VqaModel<float> c(cfg, 1);
  CHECK_THROWS_AS(load_into_store(arch, c.params()), DimensionError);
}

TEST_CASE("image files") {
  TempDir dir("images");
  ImageFile img{10, 3, 2, {}};
  for (std::size_t i = 0; i < 60; ++i) img.data.push_back(static_cast<float>(i) * 0.25f - 3.0f);
  write_image(dir.path / "x.l4im", img);
  const auto back = read_image(dir.path / "x.l4im");
  CHECK(back.bands == 10);
  CHECK(back.height == 3);
  CHECK(back.width == 2);
  CHECK(back.data == img.data);

  auto bytes = read_file(dir.path / "x.l4im");
  bytes.pop_back();
  write_file(dir.path / "short.l4im", bytes);
  CHECK_THROWS_AS(read_image(dir.path / "short.l4im"), FormatError);
  CHECK_THROWS_AS(read_image(dir.path / "missing.l4im"), InputError);
  ImageFile wrong{10, 3, 2, {1.0f}};
  CHECK_THROWS_AS(write_image(dir.path / "w.l4im", wrong), DimensionError);
}

TEST_CASE("config files") {
  SUBCASE("empty document gives the defaults") {
    const auto c = parse_config("{}");
    CHECK(c.model.image.kind == ImageEncoderKind::xcit_nano);
    CHECK(c.model.text.dim == 128);
    CHECK(c.train.base_lr == 5e-4);
  }
  SUBCASE("kind selects the family defaults, keys override") {
    const auto c = parse_config(R"({"image_encoder": {"kind": "vit_base", "layers": 3},
                                    "head": {"answers": 7}, "train": {"seed": 11}})");
    const auto& v = std::get<VitConfig>(c.model.image.arch);
    CHECK(v.dim == 768);
    CHECK(v.layers == 3);
    CHECK(c.model.fusion.image_dim == 768);
    CHECK(c.model.head.answers == 7);
    CHECK(c.train.seed == 11);
  }
  SUBCASE("round trip through config_to_json") {
    const auto c = parse_config(R"({"image_encoder": {"kind": "mobilevit_s", "dims": [48, 64, 80],
                                    "heads": 2}, "fusion": {"activation": "identity"}})");
    const auto again = parse_config(config_to_json(c));
    CHECK(config_to_json(again) == config_to_json(c));
    CHECK(std::get<MobileVitConfig>(again.model.image.arch).dims[2] == 80);
    CHECK(again.model.fusion.activation == Activation::identity);
  }
  SUBCASE("syntax errors report the line") {
    try {
      (void)parse_config("{\n  \"head\": {\n    \"hidden\": ,\n  }\n}", "cfg.json");
      FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("cfg.json") != std::string::npos);
      CHECK(msg.find("line 3") != std::string::npos);
    }
  }
  auto error_of = [](const std::string& text) {
    try {
      (void)parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  SUBCASE("semantic errors name the field") {
    CHECK(error_of(R"({"text_encoder": {"dim": 130, "heads": 4}})").find("text_encoder.dim") !=
          std::string::npos);
    CHECK(error_of(R"({"head": {"hiden": 3}})").find("head.hiden") != std::string::npos);
    CHECK(error_of(R"({"heads": {}})").find("heads") != std::string::npos);
    CHECK(error_of(R"({"image_encoder": {"kind": "resnet"}})").find("image_encoder.kind") !=
          std::string::npos);
    CHECK(error_of(R"({"image_encoder": {"kind": "vit_tiny", "class_layers": 2}})")
              .find("image_encoder.class_layers") != std::string::npos);
    CHECK(error_of(R"({"image_encoder": {"kind": "mobilevit_s", "dims": [1, 2]}})")
              .find("image_encoder.dims") != std::string::npos);
    CHECK(error_of(R"({"fusion": {"image_dim": 64}})").find("fusion.image_dim") !=
          std::string::npos);
    CHECK(error_of(R"({"fusion": {"activation": "gelu"}})").find("fusion.activation") !=
          std::string::npos);
    CHECK(error_of(R"({"train": {"batch_size": -1}})").find("train.batch_size") !=
          std::string::npos);
    CHECK(error_of(R"({"train": {"warmup_steps": 5000}})").find("train.warmup_steps") !=
          std::string::npos);
    CHECK(error_of(R"({"image_encoder": {"kind": "vit_tiny", "input_size": 120}})")
              .find("image_encoder.input_size") != std::string::npos);
  }
  SUBCASE("shipped configs parse") {
    for (const auto& entry : fs::directory_iterator(LIT4_CONFIG_DIR)) {
      INFO(entry.path());
      CHECK_NOTHROW((void)load_config(entry.path()));
    }
  }
}

TEST_CASE("dataset manifests") {
  TempDir dir("dataset");
  auto data = generate_synthetic(6, {8, 2, 0.1}, 3);
  data.samples[5].split = Split::test;
  write_dataset(dir.path, data);
  const auto back = load_manifest(dir.path / "manifest.json");
  CHECK(back.vocab == data.vocab);
  CHECK(back.answers == data.answers);
  REQUIRE(back.samples.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.samples[i].image == data.samples[i].image);
    CHECK(back.samples[i].question == data.samples[i].question);
    CHECK(back.samples[i].answer == data.samples[i].answer);
    CHECK(back.samples[i].type == data.samples[i].type);
    CHECK(back.samples[i].split == data.samples[i].split);
  }
  CHECK(back.indices(Split::test) == std::vector<std::size_t>{5});

  CHECK_THROWS_AS(load_manifest(dir.path / "nope.json"), InputError);
  auto doc = nlohmann::json::parse(read_file(dir.path / "manifest.json"));
  doc["triplets"][0]["answer"] = "maybe";
  write_file(dir.path / "bad.json", doc.dump());
  CHECK_THROWS_AS(load_manifest(dir.path / "bad.json"), InputError);
}
