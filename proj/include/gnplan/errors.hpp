#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gnplan {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible matrix/vector dimensions. Messages name both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid argument value (negative std, empty input, bad activation name, ...).
struct DomainError : Error {
    using Error::Error;
};

// Malformed input file (IDX parsing, architecture files). Messages carry a byte
// offset where applicable.
struct FormatError : Error {
    using Error::Error;
};

// A normalization group with zero variance and eps == 0.
struct DegenerateGroupError : Error {
    DegenerateGroupError(std::size_t sample, std::size_t group)
        : Error("group normalization: zero variance in sample " + std::to_string(sample) +
                ", group " + std::to_string(group) + " with eps == 0"),
          sample_index(sample),
          group_index(group) {}

    std::size_t sample_index;
    std::size_t group_index;
};

} // namespace gnplan
