#pragma once

// "diffcore-v1" checkpoint documents:
//   {"version": "diffcore-v1",
//    "params": {"<name>": {"rows": R, "cols": C, "values": [...]}, ...},
//    "optimizer": null | {"type": "adamw", "step": N, "lr": ..., ...,
//                         "first_moment": {...}, "second_moment": {...}},
//    "metadata": {...}}
// Values are written with round-trip precision so reloads are bit-exact.

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "scenesynth/optim.hpp"

namespace scenesynth::diffcore {

inline constexpr std::string_view kCheckpointVersion = "diffcore-v1";

enum class CheckpointErrc { Malformed, WrongVersion, MissingParam };

using CheckpointError = CodedError<CheckpointErrc>;

struct Checkpoint {
  std::map<std::string, Matrix> params;
  std::optional<AdamWState> optimizer;
  /// Opaque JSON object owned by the model that wrote the checkpoint.
  std::string metadata_json = "{}";
};

std::string to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(std::string_view text);

}  // namespace scenesynth::diffcore
