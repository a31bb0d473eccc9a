#pragma once

#include <stdexcept>
#include <string>

namespace uda {

// Error taxonomy shared across the library. The CLI maps ConfigError to
// exit code 2 (usage) and every other Error to exit code 1 (runtime).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between tensors; message names both shapes.
struct DimensionError : Error { using Error::Error; };

// Class or domain label outside its valid range.
struct LabelError : Error { using Error::Error; };

// Operation applied in an invalid state (missing gradient, reused tape,
// uninitialized centers).
struct StateError : Error { using Error::Error; };

// Inconsistent model or dataset specification.
struct SpecError : Error { using Error::Error; };

// Bad configuration file, key, or value.
struct ConfigError : Error { using Error::Error; };

// Malformed file contents (checkpoint, IDX).
struct FormatError : Error { using Error::Error; };

// Filesystem failures.
struct IoError : Error { using Error::Error; };

// Out-of-range row or index references.
struct IndexError : Error { using Error::Error; };

// Dataset-level inconsistencies (empty splits, count mismatches).
struct DataError : Error { using Error::Error; };

// Non-finite loss encountered during training; training aborts rather
// than clamping.
struct NumericError : Error { using Error::Error; };

// Checkpoint incompatible with the configured model.
struct CompatError : Error { using Error::Error; };

}  // namespace uda
