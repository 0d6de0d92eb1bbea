#pragma once

#include <map>
#include <string>

#include "isopoint/tensor.hpp"

namespace isopoint::ag {

/// JSON manifest of named parameter tensors plus free-form metadata (the
/// owning network stores its architecture config there and validates it on
/// load). Doubles round-trip exactly.
struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    std::string module;                          // "detecting" | "grouping"
    std::map<std::string, std::string> meta;     // architecture / geometry fields

    void save(const ParamStore& params, const std::string& path) const;

    /// Loads values into an existing store; every stored name/shape must match.
    void load_into(ParamStore& params, const std::string& path);

    /// Reads only the metadata block (module + meta) without touching params.
    static Checkpoint peek(const std::string& path);
};

}  // namespace isopoint::ag
