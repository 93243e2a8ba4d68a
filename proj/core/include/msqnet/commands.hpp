#pragma once

#include <string>
#include <vector>

#include "msqnet/config.hpp"
#include "msqnet/tensor.hpp"

namespace msqnet {

// Exit codes: 0 success, 2 configuration/usage error, 3 numerical abort.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// Dispatches one subcommand (train, eval, zeroshot, ablate, rollout,
// export-embeddings, gradcheck). `args` excludes the program name.
int run_command(const std::vector<std::string>& args);

// Gradient fidelity of the full training loss on a small deterministic
// batch, checked over every trainable parameter.
GradCheckReport model_grad_check(const Config& cfg, int batch_videos = 2);

}  // namespace msqnet
