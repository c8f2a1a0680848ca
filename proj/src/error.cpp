#include "severe/error.hpp"

namespace severe {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::out_of_domain: return "OutOfDomain";
    case Errc::empty_archive: return "EmptyArchive";
    case Errc::key_out_of_range: return "KeyOutOfRange";
    case Errc::degenerate_sample: return "DegenerateSample";
    case Errc::negative_log_input: return "NegativeLogInput";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::non_finite_loss: return "NonFiniteLoss";
    case Errc::no_positive_samples: return "NoPositiveSamples";
    case Errc::wrong_window_arity: return "WrongWindowArity";
    case Errc::checkpoint_mismatch: return "CheckpointMismatch";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::zero_climatology_variance: return "ZeroClimatologyVariance";
    case Errc::empty_input: return "EmptyInput";
    case Errc::single_member_ensemble: return "SingleMemberEnsemble";
    case Errc::empty_after_discard: return "EmptyAfterDiscard";
    case Errc::zero_variance: return "ZeroVariance";
    case Errc::unknown_predictor: return "UnknownPredictor";
    case Errc::unknown_method: return "UnknownMethod";
    case Errc::missing_metric: return "MissingMetric";
    case Errc::stage_failure: return "StageFailure";
    case Errc::config_error: return "ConfigError";
    case Errc::io_error: return "IoError";
    case Errc::format_error: return "FormatError";
  }
  return "Unknown";
}

}  // namespace severe
