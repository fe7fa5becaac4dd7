#pragma once

#include <stdexcept>
#include <string>

namespace lanesim {

// Base for everything thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user input: config files, track files, checkpoints, CLI values. Exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// Non-finite values encountered during training/inference. Exit code 3.
struct NumericError : Error {
    using Error::Error;
};

} // namespace lanesim
