#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace msis {

inline constexpr std::string_view version = "0.1.0";

// Error with a stable machine-readable code, e.g. "STATE_SPACE_TOO_LARGE".
// The CLI prints these as `ERROR <CODE>: message` on stderr.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

namespace errc {
inline constexpr const char* index_out_of_range = "INDEX_OUT_OF_RANGE";
inline constexpr const char* invalid_state = "INVALID_STATE";
inline constexpr const char* event_cap_exceeded = "EVENT_CAP_EXCEEDED";
inline constexpr const char* state_space_too_large = "STATE_SPACE_TOO_LARGE";
inline constexpr const char* non_stochastic_result = "NON_STOCHASTIC_RESULT";
inline constexpr const char* dimension_mismatch = "DIMENSION_MISMATCH";
inline constexpr const char* step_too_large = "STEP_TOO_LARGE";
inline constexpr const char* non_finite_state = "NON_FINITE_STATE";
inline constexpr const char* no_convergence = "NO_CONVERGENCE";
inline constexpr const char* left_feasible_set = "LEFT_FEASIBLE_SET";
inline constexpr const char* grid_beyond_horizon = "GRID_BEYOND_HORIZON";
inline constexpr const char* grid_mismatch = "GRID_MISMATCH";
inline constexpr const char* ensemble_too_small = "ENSEMBLE_TOO_SMALL";
inline constexpr const char* schedule_ratio_mismatch = "SCHEDULE_RATIO_MISMATCH";
inline constexpr const char* spec_invalid = "SPEC_INVALID";
inline constexpr const char* config_invalid = "CONFIG_INVALID";
inline constexpr const char* config_not_found = "CONFIG_NOT_FOUND";
inline constexpr const char* output_exists = "OUTPUT_EXISTS";
inline constexpr const char* exact_too_large = "EXACT_TOO_LARGE";
inline constexpr const char* io_error = "IO_ERROR";
}  // namespace errc

}  // namespace msis
