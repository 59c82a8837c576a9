#include <doctest.h>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <string>

#include "ecf/runconfig.hpp"

using namespace ecf;

TEST_SUITE("runconfig") {
  TEST_CASE("empty text yields the documented defaults") {
    auto cfg = parse_config_text("");
    CHECK(cfg.model.base_channels == 32);
    CHECK(cfg.model.scale == 4);
    CHECK(cfg.model.heads == 4);
    CHECK(cfg.model.use_alignment);
    CHECK(cfg.model.use_texture_transfer);
    CHECK(cfg.model.use_structure_branch);
    CHECK_FALSE(cfg.model.ttm_alternative_binding);
    CHECK(cfg.train.epochs == 50);
    CHECK(cfg.train.holdout == 2);
    CHECK(cfg.train.adam.lr == 2e-4);
    CHECK(cfg.phantom.size == 64);
    CHECK(cfg.data_count == 10);
    CHECK(cfg.data_manifest == "data/manifest.json");
    CHECK(cfg.out_dir == "out");
    CHECK(cfg.seed() == 0);
  }

  TEST_CASE("canonical text parses back to an identical rendering and hash") {
    RunConfig cfg;
    cfg.model.base_channels = 8;
    cfg.train.epochs = 7;
    cfg.set_seed(123);
    cfg.phantom.blur_sigma = 1.25;
    const std::string canon = canonical_config(cfg);
    auto back = parse_config_text(canon);
    CHECK(canonical_config(back) == canon);
    CHECK(config_hash(back) == config_hash(cfg));

    const std::string h = config_hash(cfg);
    CHECK(h.size() == 16);
    for (char c : h) CHECK(std::isxdigit(static_cast<unsigned char>(c)));
    CHECK(h != config_hash(RunConfig{}));
  }

  TEST_CASE("canonical text is sorted line by line") {
    const std::string canon = canonical_config(RunConfig{});
    std::istringstream is(canon);
    std::string prev, line;
    int keys = 0;
    while (std::getline(is, line)) {
      const std::string key = line.substr(0, line.find('='));
      if (keys > 0) CHECK(prev < key);
      prev = key;
      ++keys;
    }
    CHECK(keys >= 25);
  }

  TEST_CASE("overrides hit every value type") {
    RunConfig cfg;
    apply_override(cfg, "model.base_channels=16");
    CHECK(cfg.model.base_channels == 16);
    apply_override(cfg, "train.lr=0.001");
    CHECK(cfg.train.adam.lr == 0.001);
    apply_override(cfg, "model.use_alignment=false");
    CHECK_FALSE(cfg.model.use_alignment);
    apply_override(cfg, "model.ttm_alternative_binding=true");
    CHECK(cfg.model.ttm_alternative_binding);
    apply_override(cfg, "out.dir=/tmp/elsewhere");
    CHECK(cfg.out_dir == "/tmp/elsewhere");
    apply_override(cfg, "seed=77");
    CHECK(cfg.train.seed == 77);
    CHECK(cfg.phantom.seed == 77);
    apply_override(cfg, "data.blur_sigma=0.55");
    CHECK(cfg.phantom.blur_sigma == 0.55);
  }

  TEST_CASE("comments, blanks, and whitespace are tolerated") {
    const std::string text =
        "# run configuration\n"
        "\n"
        "  model.scale = 2  # downscale factor\n"
        "train.epochs=3\n";
    auto cfg = parse_config_text(text);
    CHECK(cfg.model.scale == 2);
    CHECK(cfg.train.epochs == 3);
  }

  TEST_CASE("unknown keys are named in the error") {
    try {
      parse_config_text("model.depth=9\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("model.depth") != std::string::npos);
      CHECK(msg.find("line 1") != std::string::npos);
    }
  }

  TEST_CASE("malformed values report the offending line") {
    try {
      parse_config_text("train.epochs=3\nmodel.scale=four\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config_text("no_equals_sign\n"), ConfigError);
    RunConfig cfg;
    CHECK_THROWS_AS(apply_override(cfg, "=5"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("train.lr=\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("model.use_alignment=maybe\n"), ConfigError);
  }

  TEST_CASE("files load like text and missing files raise IoError") {
    auto dir = std::filesystem::temp_directory_path() / "ecf_config_tests";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "run.cfg").string();
    std::ofstream(path) << "model.base_channels=8\nseed=4\n";
    auto cfg = load_config_file(path);
    CHECK(cfg.model.base_channels == 8);
    CHECK(cfg.seed() == 4);
    CHECK(cfg.phantom.seed == 4);
    CHECK_THROWS_AS(load_config_file((dir / "absent.cfg").string()), IoError);
  }

  TEST_CASE("the hash tracks values, not override order") {
    RunConfig a, b;
    apply_override(a, "model.heads=2");
    apply_override(a, "train.epochs=9");
    apply_override(b, "train.epochs=9");
    apply_override(b, "model.heads=2");
    CHECK(config_hash(a) == config_hash(b));
    apply_override(b, "train.epochs=10");
    CHECK(config_hash(a) != config_hash(b));
  }
}
