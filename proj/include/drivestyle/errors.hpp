#pragma once

#include <stdexcept>
#include <string>

namespace drivestyle {

// Error categories surfaced across the library. The CLI maps these onto
// exit codes: numerical failures -> 3, everything else -> 2.
enum class errc {
  // ingest
  malformed_row,
  non_monotonic_time,
  non_uniform_time,
  empty_input,
  short_line,
  non_numeric_field,
  too_short,
  // hmm core
  dimension_mismatch,
  non_spd_covariance,
  too_large,
  // sticky hdp-hmm
  non_spd_psi,
  bad_hyperparameters,
  // ranking
  empty_cluster,
  empty_part,
  duplicate_cluster,
  // scenario
  malformed_line,
  unknown_type,
  length_mismatch,
  unknown_cluster,
  // config / io
  bad_config,
  io_failure,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::malformed_row: return "MalformedRow";
    case errc::non_monotonic_time: return "NonMonotonicTime";
    case errc::non_uniform_time: return "NonUniformTime";
    case errc::empty_input: return "EmptyInput";
    case errc::short_line: return "ShortLine";
    case errc::non_numeric_field: return "NonNumericField";
    case errc::too_short: return "TooShort";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::non_spd_covariance: return "NonSPDCovariance";
    case errc::too_large: return "TooLarge";
    case errc::non_spd_psi: return "NonSPDPsi";
    case errc::bad_hyperparameters: return "BadHyperparameters";
    case errc::empty_cluster: return "EmptyCluster";
    case errc::empty_part: return "EmptyPart";
    case errc::duplicate_cluster: return "DuplicateCluster";
    case errc::malformed_line: return "MalformedLine";
    case errc::unknown_type: return "UnknownType";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::unknown_cluster: return "UnknownCluster";
    case errc::bad_config: return "BadConfig";
    case errc::io_failure: return "IoFailure";
  }
  return "Unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code),
        message_(what) {}

  errc code() const noexcept { return code_; }

  // The message without the error-name prefix.
  const std::string& message() const noexcept { return message_; }

  // True for failures of numerical routines rather than bad input.
  bool numerical() const noexcept {
    return code_ == errc::non_spd_covariance || code_ == errc::non_spd_psi;
  }

 private:
  errc code_;
  std::string message_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) {
  throw error(code, what);
}

}  // namespace drivestyle
