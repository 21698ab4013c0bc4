#pragma once

#include <stdexcept>
#include <string>

namespace evf {

/// Error categories surfaced by the library. Decoders and validators throw
/// Error with one of these codes instead of crashing or repairing input.
enum class Errc {
    bad_magic,
    truncated,
    out_of_bounds,
    unordered,
    schema_error,
    inconsistent_track,
    geometry_mismatch,
    bad_delta,
    exhausted_retries,
    empty_chunk,
    empty_input,
    shape_mismatch,
    label_out_of_range,
    missing_gradient,
    too_few_points,
    checkpoint_mismatch,
    manifest_error,
    diverged_loss,
    io_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg)
        : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace evf
