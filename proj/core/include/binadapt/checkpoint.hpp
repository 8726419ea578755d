#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "binadapt/tensor.hpp"

namespace binadapt {

// File layout: the 9-byte magic "BINADAPT1", then one record per tensor until
// end of file: u32 name length, name bytes, u32 rank, rank x u32 dims, then
// the values as f64. All integers and floats are little-endian.
inline constexpr char kCheckpointMagic[] = "BINADAPT1";

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_checkpoint(std::ostream& out, const NamedTensors& tensors);
NamedTensors read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

NamedTensors to_named(const ParameterSet& params);

}  // namespace binadapt
