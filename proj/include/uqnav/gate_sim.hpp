#pragma once
// Gate-racing stand-in: circular track, point-mass drone with first-order
// velocity lag, 16x16 line-drawing gate camera, expert pilot, traversal
// detection and closed-loop episodes.
//
// World frame: x, y horizontal, z up. Body frame: x forward, y left, z up;
// the drone never pitches or rolls, so body = Rz(-yaw) * world.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uqnav/command.hpp"
#include "uqnav/perception.hpp"
#include "uqnav/rng.hpp"
#include "uqnav/uq_propagation.hpp"

namespace uqnav::sim {

using perception::GateRelativePose;
using perception::Observation;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

struct Gate {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    double yaw = 0.0;  // direction of the gate normal (direction of travel)
    double half_aperture = 0.75;

    Eigen::Vector3d normal() const;
    /// Horizontal in-plane axis (normal rotated +90 degrees about z).
    Eigen::Vector3d lateral_axis() const;
};

struct TrackConfig {
    std::size_t n_gates = 8;
    double radius = 8.0;
    double base_height = 2.0;
    double radius_noise = 0.0;  // uniform amplitude, m
    double height_noise = 0.0;  // uniform amplitude, m
    double half_aperture = 0.75;
    std::uint64_t seed = 0;

    void validate() const;
};

inline constexpr double kMinGateHeight = 0.5;

/// Gate i at angle 2*pi*i/n, radius + U(-R, R), max(0.5, height + U(-H, H)),
/// normal tangent to the circle in the counter-clockwise direction.
std::vector<Gate> generate_track(const TrackConfig& config, Rng& rng);
/// Uses Rng(config.seed).
std::vector<Gate> generate_track(const TrackConfig& config);

struct DroneState {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double yaw = 0.0;
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // world frame
    double yaw_rate = 0.0;
    double time = 0.0;

    bool finite() const;
    bool operator==(const DroneState&) const = default;
};

GateRelativePose relative_gate_pose(const DroneState& state, const Gate& gate);

// ---------------------------------------------------------------------------
// Camera

inline constexpr double kFocalPx = 8.0;  // 90 degree FOV on 16 px
inline constexpr double kNearPlane = 0.05;

/// Projects a world point into pixel coordinates (u right, v down, origin at the
/// top-left corner, image center at (8, 8)). Returns nullopt if the point is
/// not in front of the camera.
std::optional<Eigen::Vector2d> project(const DroneState& state, const Eigen::Vector3d& world_point);

/// Draws the aperture outline of `next_gate`, adds N(0, noise_std) per pixel, clamps to [0,1].
Observation render_observation(const DroneState& state, const Gate& next_gate, double pixel_noise_std, Rng& rng);

// ---------------------------------------------------------------------------
// Expert and dynamics

struct ExpertGains {
    double slow_radius = 3.0;  // m
    double min_speed = 1.0;    // m/s
    double yaw_gain = 1.5;
    double align_radius = 2.0;  // m; inside it the heading blends from the gate bearing to the gate normal
};

VelocityCommand expert_command(const DroneState& state, const Gate& next_gate, const ExpertGains& gains = {});

struct DynamicsConfig {
    double dt = 0.05;
    double tau = 0.3;
};

/// Clamps the command, then applies the first-order lag to velocity and yaw rate.
DroneState step_dynamics(const DroneState& state, const VelocityCommand& cmd, const DynamicsConfig& dyn = {});

enum class GateEvent { none, traversed, missed };

/// Plane crossing from the negative to the non-negative side of the gate normal.
GateEvent check_gate_event(const DroneState& prev, const DroneState& cur, const Gate& gate);

// ---------------------------------------------------------------------------
// Episodes

struct PolicyInput {
    const DroneState& state;
    const Observation& observation;
    const Gate& next_gate;  // ground truth, for the expert only
    std::size_t step;
    Rng& rng;               // per-step stream
};

struct PolicyDecision {
    VelocityCommand command;
    std::optional<uq::PredictiveResult> prediction;
};

using Policy = std::function<PolicyDecision(const PolicyInput&)>;

Policy expert_policy(const ExpertGains& gains = {});

enum class Termination { completed, missed_gate, timeout_gate, max_steps };

std::string to_string(Termination t);

struct TrajectoryPoint {
    double time = 0.0;
    DroneState state;
    VelocityCommand command;
    std::optional<uq::PredictiveResult> prediction;
};

struct EpisodeConfig {
    DynamicsConfig dynamics;
    double pixel_noise_std = 0.05;
    std::size_t max_gates = 32;
    double gate_time_budget = 15.0;  // s per gate
    std::size_t max_steps = 12000;
    double start_offset = 2.0;  // m behind gate 0
    double start_height = 2.0;  // m, the track's base height
    bool log_trajectory = true;
};

struct EpisodeResult {
    std::size_t gates_traversed = 0;
    Termination termination = Termination::max_steps;
    bool aborted = false;  // policy produced a non-finite command
    std::string error;
    std::size_t steps = 0;
    std::vector<TrajectoryPoint> trajectory;
};

/// start_offset behind gate 0 on its axis at start_height, facing along its normal.
DroneState start_state(const std::vector<Gate>& track, double start_offset = 2.0, double start_height = 2.0);

/// Closed loop: render -> policy -> clamp -> step. Rendering noise and the
/// policy's per-step stream are both derived from `rng` and the step index.
EpisodeResult run_episode(const Policy& policy, const std::vector<Gate>& track, const EpisodeConfig& config,
                          const Rng& rng);

/// CSV: time, x, y, z, yaw, cmd_vx, cmd_vy, cmd_vz, cmd_yaw_rate, std_vx, std_vy, std_vz, std_yaw_rate.
std::string trajectory_csv(const EpisodeResult& episode);

}  // namespace uqnav::sim
