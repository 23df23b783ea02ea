#include "ecse/rotations.hpp"

#include <cmath>

namespace ecse {

Frame random_rotation(Rng& rng) {
  double q[4];
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (double& c : q) {
      c = rng.gaussian();
      n2 += c * c;
    }
  } while (n2 == 0.0);
  const double inv = 1.0 / std::sqrt(n2);
  const double w = q[0] * inv, x = q[1] * inv, y = q[2] * inv, z = q[3] * inv;

  Mat3 r;
  r(0, 0) = 1.0 - 2.0 * (y * y + z * z);
  r(0, 1) = 2.0 * (x * y - z * w);
  r(0, 2) = 2.0 * (x * z + y * w);
  r(1, 0) = 2.0 * (x * y + z * w);
  r(1, 1) = 1.0 - 2.0 * (x * x + z * z);
  r(1, 2) = 2.0 * (y * z - x * w);
  r(2, 0) = 2.0 * (x * z - y * w);
  r(2, 1) = 2.0 * (y * z + x * w);
  r(2, 2) = 1.0 - 2.0 * (x * x + y * y);
  return Frame{r};
}

}  // namespace ecse
