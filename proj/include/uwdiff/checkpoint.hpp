#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "uwdiff/tensor.hpp"

namespace uwdiff {

// On-disk training state: a JSON header plus named f32 tensors.
// Parameter and moment tensors round-trip bit-exactly.
struct Checkpoint {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    const Tensor<float>* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace uwdiff
