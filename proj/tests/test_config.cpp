#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "severe/config.hpp"
#include "severe/error.hpp"

using namespace severe;

namespace {

Errc code_of(const std::string& text) {
  try {
    ExperimentConfig::from_ini(text);
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::stage_failure;  // sentinel: nothing thrown
}

}  // namespace

TEST_CASE("config round-trips through its text form exactly") {
  ExperimentConfig c;
  c.seed = 18446744073709551557ULL;
  c.synth.storms_per_day = 0.1 + 0.2;  // not representable in short decimal
  c.synth.origin.lon = -97.123456789012345;
  c.synth.start = Date::from_ymd(2019, 2, 28);
  c.cgan.lambda = 1.0 / 3.0;
  c.cgan.non_saturating = true;
  c.encoder.widths = {4, 8, 16};
  c.verify.mask_reference_samples = 5.2954200000000001e7;
  c.ensemble.cross_product = true;

  const auto back = ExperimentConfig::from_ini(c.to_ini());
  CHECK(back == c);
  CHECK(back.seed == c.seed);
  CHECK(back.synth.storms_per_day == c.synth.storms_per_day);
  CHECK(back.synth.origin.lon == c.synth.origin.lon);
  CHECK(back.cgan.lambda == c.cgan.lambda);
  CHECK(back.encoder.widths == c.encoder.widths);
  CHECK(back.synth.start == c.synth.start);
  CHECK(back.cgan.non_saturating);
  CHECK(back.to_ini() == c.to_ini());
  CHECK(back.digest() == c.digest());

  const auto path = std::filesystem::temp_directory_path() / "severe_config_test.ini";
  c.save(path);
  CHECK(ExperimentConfig::load(path) == c);
  std::filesystem::remove(path);
}

TEST_CASE("missing keys keep defaults; sections may be partial") {
  const auto c = ExperimentConfig::from_ini("[run]\nseed = 9\n\n[cgan]\nepochs = 1\n");
  ExperimentConfig d;
  d.seed = 9;
  d.cgan.epochs = 1;
  CHECK(c == d);
  CHECK(ExperimentConfig::from_ini("") == ExperimentConfig{});
}

TEST_CASE("unknown keys, unknown sections and malformed values are config errors") {
  CHECK(code_of("[run]\nsead = 1\n") == Errc::config_error);
  CHECK(code_of("[runn]\nseed = 1\n") == Errc::config_error);
  CHECK(code_of("seed = 1\n") == Errc::config_error);
  CHECK(code_of("[run]\nseed = -1\n") == Errc::config_error);
  CHECK(code_of("[run]\nseed = 12x\n") == Errc::config_error);
  CHECK(code_of("[synth]\nstorms_per_day = lots\n") == Errc::config_error);
  CHECK(code_of("[synth]\nstart = 2020-13-01\n") == Errc::config_error);
  CHECK(code_of("[cgan]\nadversarial = maybe\n") == Errc::config_error);
  CHECK(code_of("[encoder]\nwidths = 4,,8\n") == Errc::config_error);
  CHECK(code_of("[run\nseed = 1\n") == Errc::config_error);
  // Values that parse but violate invariants.
  CHECK(code_of("[synth]\nverify_days = 0\n") == Errc::config_error);
  CHECK(code_of("[synth]\nfine_rows = 32\n") == Errc::config_error);
  CHECK(code_of("[ensemble]\ncgan_members = 0\n") == Errc::config_error);
  CHECK(code_of("[cgan]\ngenerator_widths = 1,1,1,1,1,1,1\n") == Errc::config_error);
  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/severe.ini"), Error);
}

TEST_CASE("stage seeds derive from the global seed") {
  ExperimentConfig a, b;
  b.seed = a.seed + 1;
  CHECK(a.stage_seed("train-cgan") != b.stage_seed("train-cgan"));
  CHECK(a.stage_seed("train-cgan") != a.stage_seed("train-mlp"));
  CHECK(a.stage_seed("predict") == ExperimentConfig{}.stage_seed("predict"));
  CHECK(a.synth_config().seed != b.synth_config().seed);
  // The archive seed field in the struct is not an input.
  a.synth.seed = 12345;
  CHECK(a.synth_config().seed == ExperimentConfig{}.synth_config().seed);
}
