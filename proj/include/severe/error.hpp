#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace severe {

// Every failure the library reports carries one of these codes so callers and
// tests can branch on the kind of failure rather than on message text.
enum class Errc {
  out_of_domain,
  empty_archive,
  key_out_of_range,
  degenerate_sample,
  negative_log_input,
  shape_mismatch,
  non_finite_loss,
  no_positive_samples,
  wrong_window_arity,
  checkpoint_mismatch,
  length_mismatch,
  zero_climatology_variance,
  empty_input,
  single_member_ensemble,
  empty_after_discard,
  zero_variance,
  unknown_predictor,
  unknown_method,
  missing_metric,
  stage_failure,
  config_error,
  io_error,
  format_error,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace severe
