#include "severe/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "severe/digest.hpp"
#include "severe/error.hpp"
#include "severe/rng.hpp"

namespace severe {

namespace {

namespace pt = boost::property_tree;

std::string to_text(int v) { return std::to_string(v); }
std::string to_text(std::uint64_t v) { return std::to_string(v); }
std::string to_text(bool v) { return v ? "true" : "false"; }
std::string to_text(const Date& v) { return v.iso(); }
// Shortest %g form that parses back to the same double.
std::string to_text(double v) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}
std::string to_text(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& text, const char* expected) {
  fail(Errc::config_error, "'" + key + "' = '" + text + "' is not " + expected);
}

void from_text(const std::string& key, const std::string& s, int& v) {
  errno = 0;
  char* end = nullptr;
  const long x = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno != 0 || x < INT32_MIN || x > INT32_MAX) bad_value(key, s, "an integer");
  v = static_cast<int>(x);
}
void from_text(const std::string& key, const std::string& s, std::uint64_t& v) {
  errno = 0;
  char* end = nullptr;
  if (s.empty() || s[0] == '-') bad_value(key, s, "an unsigned integer");
  v = std::strtoull(s.c_str(), &end, 10);
  if (*end != '\0' || errno != 0) bad_value(key, s, "an unsigned integer");
}
void from_text(const std::string& key, const std::string& s, double& v) {
  errno = 0;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno != 0) bad_value(key, s, "a number");
}
void from_text(const std::string& key, const std::string& s, bool& v) {
  if (s == "true" || s == "1") v = true;
  else if (s == "false" || s == "0") v = false;
  else bad_value(key, s, "true or false");
}
void from_text(const std::string& key, const std::string& s, Date& v) {
  try {
    v = Date::parse(s);
  } catch (const Error&) {
    bad_value(key, s, "a YYYY-MM-DD date");
  }
}
void from_text(const std::string& key, const std::string& s, std::vector<int>& v) {
  v.clear();
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    int x = 0;
    from_text(key, item, x);
    v.push_back(x);
  }
  if (v.empty()) bad_value(key, s, "a comma-separated integer list");
}

// Calls f(section, key, field) for every configurable field, in file order.
template <class Config, class F>
void visit(Config& c, F&& f) {
  f("run", "seed", c.seed);

  auto& s = c.synth;
  f("synth", "fine_rows", s.fine_rows);
  f("synth", "fine_cols", s.fine_cols);
  f("synth", "spacing_km", s.spacing_km);
  f("synth", "origin_lat", s.origin.lat);
  f("synth", "origin_lon", s.origin.lon);
  f("synth", "coarse_rows", s.coarse_rows);
  f("synth", "coarse_cols", s.coarse_cols);
  f("synth", "storms_per_day", s.storms_per_day);
  f("synth", "a_uh", s.a_uh);
  f("synth", "a_cref", s.a_cref);
  f("synth", "bias", s.bias);
  f("synth", "corr_cape_cin", s.corr_cape_cin);
  f("synth", "corr_cref_dewpoint", s.corr_cref_dewpoint);
  f("synth", "corr_srh", s.corr_srh);
  f("synth", "noise_floor", s.noise_floor);
  f("synth", "start", s.start);
  f("synth", "n_days", c.n_days);
  f("synth", "verify_days", c.verify_days);
  f("synth", "climatology_years", c.climatology_years);

  f("climatology", "sigma_doy", c.smoothing.sigma_doy);
  f("climatology", "sigma_hour", c.smoothing.sigma_hour);

  auto& g = c.cgan;
  f("cgan", "generator_widths", g.generator.widths);
  f("cgan", "bottleneck", g.generator.bottleneck);
  f("cgan", "discriminator_widths", g.discriminator.widths);
  f("cgan", "lambda", g.lambda);
  f("cgan", "noise_sigma", g.noise_sigma);
  f("cgan", "learning_rate", g.learning_rate);
  f("cgan", "decay", g.decay);
  f("cgan", "batch_size", g.batch_size);
  f("cgan", "epochs", g.epochs);
  f("cgan", "adversarial", g.adversarial);
  f("cgan", "non_saturating", g.non_saturating);
  f("cgan", "bank_size", c.cgan_bank);

  auto train = [&f](const char* section, auto& t) {
    f(section, "learning_rate", t.learning_rate);
    f(section, "decay", t.decay);
    f(section, "batch_size", t.batch_size);
    f(section, "max_epochs", t.max_epochs);
    f(section, "early_stop_patience", t.early_stop_patience);
  };

  f("encoder", "widths", c.encoder.widths);
  train("encoder", c.encoder_train);
  f("encoder", "bank_positives", c.encoder_positives);
  f("encoder", "bank_negatives", c.encoder_negatives);
  f("encoder", "negatives_per_positive", c.encoder_ratio);

  f("classifier", "conv_kernels", c.classifier.conv_kernels);
  f("classifier", "kernel_length", c.classifier.kernel_length);
  f("classifier", "hidden", c.classifier.hidden);
  f("classifier", "dropout", c.classifier.dropout);
  train("classifier", c.classifier_train);
  f("classifier", "negatives_per_positive", c.classifier_ratio);

  f("mlp", "hidden1", c.mlp.hidden1);
  f("mlp", "hidden2", c.mlp.hidden2);
  f("mlp", "dropout", c.mlp.dropout);
  train("mlp", c.mlp_train);
  f("mlp", "negatives_per_positive", c.mlp_ratio);

  f("ensemble", "cgan_members", c.ensemble.cgan_members);
  f("ensemble", "dropout_members", c.ensemble.dropout_members);
  f("ensemble", "cross_product", c.ensemble.cross_product);
  f("ensemble", "cross_draws", c.ensemble.cross_draws);

  auto& v = c.verify;
  f("verify", "reliability_bins", v.reliability_bins);
  f("verify", "bootstrap", v.bootstrap);
  f("verify", "spread_bins", v.spread_bins);
  f("verify", "mask_threshold", v.mask_threshold);
  f("verify", "mask_reference_samples", v.mask_reference_samples);
  f("verify", "importance_shuffles", v.importance_shuffles);
  f("verify", "top_fraction", v.top_fraction);
  f("verify", "fidelity_patches_per_day", v.fidelity_patches_per_day);
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  cgan.generator.widths = {8, 16, 32};
  cgan.generator.bottleneck = 64;
  cgan.discriminator.widths = {8, 16, 32};
  cgan.learning_rate = 5e-3;
  cgan.epochs = 6;

  encoder.widths = {8, 16, 32, 128};
  encoder_train.learning_rate = 1e-3;
  encoder_train.max_epochs = 6;
  encoder_train.early_stop_patience = 3;

  classifier_train.learning_rate = 1e-3;
  classifier_train.max_epochs = 40;
  classifier_train.early_stop_patience = 5;

  mlp_train.learning_rate = 1e-3;
  mlp_train.batch_size = 64;
  mlp_train.max_epochs = 30;
  mlp_train.early_stop_patience = 5;
}

SynthConfig ExperimentConfig::synth_config() const {
  SynthConfig s = synth;
  s.seed = stage_seed("synth-data");
  return s;
}

std::uint64_t ExperimentConfig::stage_seed(const std::string& stage) const {
  return derive_seed(seed, {hash_string(stage)});
}

std::string ExperimentConfig::to_ini() const {
  std::string out, section;
  visit(*this, [&](const char* sec, const char* key, const auto& field) {
    if (section != sec) {
      out += (section.empty() ? "[" : "\n[") + std::string(sec) + "]\n";
      section = sec;
    }
    out += std::string(key) + " = " + to_text(field) + "\n";
  });
  return out;
}

ExperimentConfig ExperimentConfig::from_ini(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(Errc::config_error, std::string("malformed config: ") + e.what());
  }
  ExperimentConfig c;
  std::set<std::string> known, sections;
  visit(c, [&](const char* sec, const char* key, auto& field) {
    sections.insert(sec);
    const std::string path = std::string(sec) + "." + key;
    known.insert(path);
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.'))) from_text(path, *v, field);
  });
  for (const auto& [sec, keys] : tree) {
    require(!keys.empty() || keys.data().empty(), Errc::config_error, "key '" + sec + "' outside any section");
    for (const auto& [key, value] : keys)
      require(known.count(sec + "." + key) != 0, Errc::config_error, "unknown config key '" + sec + "." + key + "'");
    require(sections.count(sec) != 0, Errc::config_error, "unknown config section '" + sec + "'");
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::config_error, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_ini(ss.str());
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + path.string());
  out << to_ini();
  require(static_cast<bool>(out), Errc::io_error, "failed writing " + path.string());
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, Errc::config_error, what); };
  try {
    synth_config().validate();
  } catch (const Error& e) {
    fail(Errc::config_error, e.what());
  }
  check(verify_days >= 1 && n_days > verify_days + 1, "need verification days and at least two training days");
  check(climatology_years >= 1, "climatology needs at least one year");
  check(smoothing.sigma_doy >= 0.0 && smoothing.sigma_hour >= 0.0, "smoothing widths must be non-negative");
  check(!cgan.generator.widths.empty() && !cgan.discriminator.widths.empty(), "CGAN widths must be non-empty");
  check(kPatchSize % (1 << cgan.generator.widths.size()) == 0, "too many generator levels for 64x64 patches");
  check(cgan.epochs >= 0 && cgan.batch_size >= 1 && cgan_bank >= 1, "CGAN epochs, batch and bank must be positive");
  check(!encoder.widths.empty() && encoder_positives >= 1 && encoder_negatives >= 1,
        "encoder widths and patch banks must be non-empty");
  for (const auto* t : {&encoder_train, &classifier_train, &mlp_train})
    check(t->learning_rate > 0.0 && t->batch_size >= 1 && t->max_epochs >= 0 && t->early_stop_patience >= 1,
          "training rates, batch sizes, epochs and patience must be positive");
  check(encoder_ratio > 0.0 && classifier_ratio > 0.0 && mlp_ratio > 0.0, "undersampling ratios must be positive");
  check(ensemble.cgan_members >= 1 && ensemble.dropout_members >= 1 && ensemble.cross_draws >= 1,
        "ensemble sizes must be positive");
  check(verify.reliability_bins >= 1 && verify.bootstrap >= 1 && verify.spread_bins >= 1 &&
            verify.importance_shuffles >= 1 && verify.fidelity_patches_per_day >= 0,
        "verification counts must be positive");
  check(verify.top_fraction > 0.0 && verify.top_fraction <= 1.0, "top fraction must lie in (0, 1]");
  check(verify.mask_reference_samples > 0.0 && verify.mask_threshold >= 0.0, "mask threshold must be non-negative");
}

std::string ExperimentConfig::digest() const { return sha256_hex(to_ini()); }

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return a.to_ini() == b.to_ini(); }

}  // namespace severe
