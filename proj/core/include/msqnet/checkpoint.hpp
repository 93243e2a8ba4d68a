#pragma once

#include <string>
#include <vector>

#include "msqnet/tensor.hpp"

namespace msqnet {

// Binary tensor container: magic "MSQK", u32 version, u32 tensor count, then
// per tensor u32 name length + UTF-8 name, u32 ndim, u32 dims, and the
// little-endian 64-bit float payload. Round trips are bit exact.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<ParamRef>& tensors);

// Reads every tensor in file order. Throws on bad magic/version/truncation.
std::vector<ParamRef> read_checkpoint(const std::string& path);

// Strict load into live tensors: every name must be present with an exactly
// matching shape, no extras allowed. Nothing is written on failure.
void load_checkpoint(const std::string& path, const std::vector<ParamRef>& into);

}  // namespace msqnet
