#pragma once

#include "ecse/rng.hpp"
#include "ecse/smoothmath.hpp"

namespace ecse {

// Haar-uniform proper rotation: a 4-vector of standard normals, normalized to
// a unit quaternion and converted to its rotation matrix.
Frame random_rotation(Rng& rng);

}  // namespace ecse
