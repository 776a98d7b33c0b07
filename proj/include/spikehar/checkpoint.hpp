#pragma once

#include <string>
#include <utility>
#include <vector>

#include "spikehar/autodiff.hpp"

namespace spikehar {

// SPKC container: magic "SPKC", version u32, tensor count u32, then per
// tensor: name length u32, name bytes, rank u32, dims u64 each, values f64
// little-endian. Round-trips bit-exactly.

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

// Copies checkpoint values into the given parameters, matched by name.
// Throws FormatError on missing names or shape mismatches.
void load_into_params(const NamedTensors& tensors, const std::vector<Parameter*>& params);
NamedTensors collect_params(const std::vector<Parameter*>& params);

// Convenience scalar lookup for metadata entries; throws FormatError when absent.
double checkpoint_scalar(const NamedTensors& tensors, const std::string& name);
bool checkpoint_has(const NamedTensors& tensors, const std::string& name);

}  // namespace spikehar
