#pragma once

#include <Eigen/Geometry>

#include <vector>

namespace bnc {

inline constexpr double kPoseRate = 240.0;  // tracker frames per second
inline constexpr int kConditionDim = 14;    // tx pos, tx quat, rx pos, rx quat

// Transmitter (source) and receiver (listener head) placement at one instant.
// Quaternions rotate body axes into the room frame: body +x faces forward,
// +y points to the left ear, +z up.
struct Pose {
  Eigen::Vector3d tx_pos = Eigen::Vector3d::Zero();
  Eigen::Quaterniond tx_rot = Eigen::Quaterniond::Identity();
  Eigen::Vector3d rx_pos = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rx_rot = Eigen::Quaterniond::Identity();
};

struct PoseTrack {
  std::vector<double> times;  // seconds, strictly increasing
  std::vector<Pose> poses;

  bool empty() const { return poses.empty(); }
  std::size_t size() const { return poses.size(); }
  double duration() const { return times.empty() ? 0.0 : times.back() - times.front(); }

  // Constant pose sampled at the tracker rate for `duration` seconds.
  static PoseTrack constant(const Pose& pose, double duration, double rate = kPoseRate);
};

}  // namespace bnc
