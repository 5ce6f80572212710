#pragma once

#include <stdexcept>
#include <string>

namespace ebsg {

/// Base for all checkpoint load failures.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File is truncated, not parseable, or missing a required field.
struct CheckpointFormatError : CheckpointError {
    using CheckpointError::CheckpointError;
};

/// format_version differs from the version this build writes.
struct CheckpointVersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};

/// Kind tag is not one this build knows how to restore.
struct CheckpointKindError : CheckpointError {
    using CheckpointError::CheckpointError;
};

/// Malformed session-log row; carries the 1-based line number.
struct SessionFormatError : std::runtime_error {
    SessionFormatError(int line_number, const std::string& what_arg)
        : std::runtime_error("line " + std::to_string(line_number) + ": " + what_arg),
          line(line_number) {}
    int line;
};

/// Instance exceeds the explicit enumeration guard.
struct EnumerationLimitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite quantity; message names the term.
struct TrainDivergedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ebsg
