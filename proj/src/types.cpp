#include "vid/types.hpp"

#include <cmath>
#include <stdexcept>

namespace vid {

void NoiseConfig::validate() const {
  for (double s : {sigma_a, sigma_w, sigma_T, sigma_ba, sigma_bw, pixel_sigma})
    if (!(s >= 0.0) || !std::isfinite(s))
      throw std::invalid_argument("noise sigmas must be finite and non-negative");
  for (double r : {imu_hz, rmu_hz, cam_hz})
    if (!(r > 0.0) || !std::isfinite(r))
      throw std::invalid_argument("sensor rates must be positive");
}

std::vector<double> SensorLog::frame_times() const {
  std::vector<double> out;
  for (const auto& o : cam)
    if (out.empty() || o.frame_t > out.back()) out.push_back(o.frame_t);
  return out;
}

}  // namespace vid
