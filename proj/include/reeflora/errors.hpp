#pragma once

#include <stdexcept>
#include <string>

namespace reeflora {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up (matmul inner dims, bias length, ...).
struct DimensionError : Error {
    using Error::Error;
};

// Raster / tiling geometry violation (image smaller than tile, non-divisible
// patch grid, ...).
struct GeometryError : Error {
    using Error::Error;
};

// Invalid configuration value or key.
struct ConfigError : Error {
    using Error::Error;
};

// An API precondition was violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

// File could not be read, written or parsed.
struct IoError : Error {
    using Error::Error;
};

}  // namespace reeflora
