#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "mrf/tensor.hpp"

namespace mrf {

// Text checkpoint layout:
//
//   mrf-checkpoint 1
//   count <n>
//   param <name> <rank> <dim0> ... <dimR-1>
//   <numel hexfloat values, space separated>
//   ... (n param blocks)
//   checksum <16 hex digits>
//
// Values are written with printf("%a") so a load reproduces every bit. The
// checksum is FNV-1a 64 over all bytes preceding the checksum line.

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

std::string serialize_parameters(const ParameterStore& params);
/// Throws CorruptArtifactError on any syntax, checksum or count problem.
ParameterStore deserialize_parameters(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params);
ParameterStore load_checkpoint(const std::filesystem::path& path);

}  // namespace mrf
