#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace uqnav {

inline constexpr double kMaxSpeed = 3.0;     // m/s per axis
inline constexpr double kMaxYawRate = 1.5;   // rad/s

/// Body-frame velocity command.
struct VelocityCommand {
    double vx = 0.0;
    double vy = 0.0;
    double vz = 0.0;
    double yaw_rate = 0.0;

    bool finite() const { return std::isfinite(vx) && std::isfinite(vy) && std::isfinite(vz) && std::isfinite(yaw_rate); }

    /// Per-axis saturation at the actuation limits.
    VelocityCommand clamped() const {
        return {std::clamp(vx, -kMaxSpeed, kMaxSpeed), std::clamp(vy, -kMaxSpeed, kMaxSpeed),
                std::clamp(vz, -kMaxSpeed, kMaxSpeed), std::clamp(yaw_rate, -kMaxYawRate, kMaxYawRate)};
    }

    /// Training targets live in [-1, 1]: velocities over v_max, yaw rate over its limit.
    Eigen::Vector4d normalized() const { return {vx / kMaxSpeed, vy / kMaxSpeed, vz / kMaxSpeed, yaw_rate / kMaxYawRate}; }

    static VelocityCommand from_normalized(const Eigen::Ref<const Eigen::VectorXd>& v) {
        return {v(0) * kMaxSpeed, v(1) * kMaxSpeed, v(2) * kMaxSpeed, v(3) * kMaxYawRate};
    }

    Eigen::Vector4d as_vector() const { return {vx, vy, vz, yaw_rate}; }

    bool operator==(const VelocityCommand&) const = default;
};

/// Per-dimension scale between normalized policy outputs and command units.
inline Eigen::Vector4d command_scale() { return {kMaxSpeed, kMaxSpeed, kMaxSpeed, kMaxYawRate}; }

}  // namespace uqnav
