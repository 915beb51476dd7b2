#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tensor.hpp"

namespace nearmiss {

/// Parameter archive: JSON header followed by raw little-endian doubles.
struct Checkpoint {
    nlohmann::ordered_json header;
    std::vector<std::pair<std::string, nn::Tensor>> tensors;

    const nn::Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace nearmiss
