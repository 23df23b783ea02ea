#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "ecse/mlp_backbone.hpp"
#include "ecse/pet.hpp"

namespace ecse {

// Binary checkpoint: an 8-byte magic ("ECSEBB01"), a u32 backbone tag
// (1 = mlp, 2 = pet), the u64 init seed, the backbone shape fields, a u64
// parameter count, then the flat parameter vector as raw little-endian
// 64-bit floats. The exact byte layout is documented in the README.
void save_checkpoint(const std::string& path, const MlpBackbone& model,
                     std::uint64_t seed);
void save_checkpoint(const std::string& path, const PetBackbone& model,
                     std::uint64_t seed);

struct LoadedBackbone {
  std::unique_ptr<Backbone> model;
  std::uint64_t seed = 0;
};

LoadedBackbone load_checkpoint(const std::string& path);

}  // namespace ecse
