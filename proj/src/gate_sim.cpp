#include "uqnav/gate_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "uqnav/errors.hpp"

namespace uqnav::sim {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kSide = static_cast<int>(perception::kImageSide);

Eigen::Vector3d to_body(const DroneState& s, const Eigen::Vector3d& world_offset) {
    const double c = std::cos(s.yaw);
    const double si = std::sin(s.yaw);
    return {c * world_offset.x() + si * world_offset.y(), -si * world_offset.x() + c * world_offset.y(), world_offset.z()};
}

Eigen::Vector3d to_world(double yaw, const Eigen::Vector3d& body) {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    return {c * body.x() - s * body.y(), s * body.x() + c * body.y(), body.z()};
}

Eigen::Vector2d body_to_pixel(const Eigen::Vector3d& b) {
    const double half = perception::kImageSide / 2.0;
    return {half - kFocalPx * b.y() / b.x(), half - kFocalPx * b.z() / b.x()};
}

// Liang-Barsky clip of segment a-b to [lo, hi]^2. Returns false if nothing remains.
bool clip_to_box(Eigen::Vector2d& a, Eigen::Vector2d& b, double lo, double hi) {
    double t0 = 0.0;
    double t1 = 1.0;
    const Eigen::Vector2d d = b - a;
    const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
    const double q[4] = {a.x() - lo, hi - a.x(), a.y() - lo, hi - a.y()};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return false;
            continue;
        }
        const double t = q[i] / p[i];
        if (p[i] < 0.0) {
            t0 = std::max(t0, t);
        } else {
            t1 = std::min(t1, t);
        }
        if (t0 > t1) return false;
    }
    const Eigen::Vector2d a0 = a;
    a = a0 + t0 * d;
    b = a0 + t1 * d;
    return true;
}

void rasterize_line(Eigen::VectorXd& pixels, int x0, int y0, int x1, int y1) {
    const int dx = std::abs(x1 - x0);
    const int dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1;
    const int sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        if (x0 >= 0 && x0 < kSide && y0 >= 0 && y0 < kSide) pixels(y0 * kSide + x0) = 1.0;
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void draw_edge(Eigen::VectorXd& pixels, const DroneState& state, const Eigen::Vector3d& a_world,
               const Eigen::Vector3d& b_world) {
    Eigen::Vector3d a = to_body(state, a_world - state.position);
    Eigen::Vector3d b = to_body(state, b_world - state.position);
    if (a.x() < kNearPlane && b.x() < kNearPlane) return;
    // Clip against the near plane.
    if (a.x() < kNearPlane) {
        a = a + (kNearPlane - a.x()) / (b.x() - a.x()) * (b - a);
    } else if (b.x() < kNearPlane) {
        b = b + (kNearPlane - b.x()) / (a.x() - b.x()) * (a - b);
    }
    Eigen::Vector2d pa = body_to_pixel(a);
    Eigen::Vector2d pb = body_to_pixel(b);
    const double hi = static_cast<double>(kSide) - 1e-9;
    if (!clip_to_box(pa, pb, 0.0, hi)) return;
    rasterize_line(pixels, static_cast<int>(std::floor(pa.x())), static_cast<int>(std::floor(pa.y())),
                   static_cast<int>(std::floor(pb.x())), static_cast<int>(std::floor(pb.y())));
}

}  // namespace

double wrap_angle(double a) {
    double w = std::remainder(a, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

Eigen::Vector3d Gate::normal() const { return {std::cos(yaw), std::sin(yaw), 0.0}; }

Eigen::Vector3d Gate::lateral_axis() const { return {-std::sin(yaw), std::cos(yaw), 0.0}; }

void TrackConfig::validate() const {
    if (n_gates < 3) throw ContractViolation("TrackConfig: need at least 3 gates");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw ContractViolation("TrackConfig: radius must be positive");
    if (!(radius_noise >= 0.0) || !(height_noise >= 0.0)) throw ContractViolation("TrackConfig: noise amplitudes must be >= 0");
    if (!(half_aperture > 0.0)) throw ContractViolation("TrackConfig: half aperture must be positive");
    if (!std::isfinite(base_height)) throw ContractViolation("TrackConfig: non-finite base height");
}

std::vector<Gate> generate_track(const TrackConfig& config, Rng& rng) {
    config.validate();
    std::vector<Gate> gates;
    gates.reserve(config.n_gates);
    for (std::size_t i = 0; i < config.n_gates; ++i) {
        const double angle = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(config.n_gates);
        const double dr = rng.uniform(-1.0, 1.0) * config.radius_noise;
        const double dh = rng.uniform(-1.0, 1.0) * config.height_noise;
        const double r = config.radius + dr;
        const double h = std::max(kMinGateHeight, config.base_height + dh);
        gates.push_back({{r * std::cos(angle), r * std::sin(angle), h}, wrap_angle(angle + kPi / 2.0), config.half_aperture});
    }
    return gates;
}

std::vector<Gate> generate_track(const TrackConfig& config) {
    Rng rng(config.seed);
    return generate_track(config, rng);
}

bool DroneState::finite() const {
    return position.allFinite() && velocity.allFinite() && std::isfinite(yaw) && std::isfinite(yaw_rate) &&
           std::isfinite(time);
}

GateRelativePose relative_gate_pose(const DroneState& state, const Gate& gate) {
    const Eigen::Vector3d b = to_body(state, gate.center - state.position);
    const double horizontal = std::hypot(b.x(), b.y());
    GateRelativePose p;
    p.r = b.norm();
    p.theta = (horizontal > 0.0) ? wrap_angle(std::atan2(b.y(), b.x())) : 0.0;
    p.phi = (p.r > 0.0) ? std::atan2(b.z(), horizontal) : 0.0;
    p.psi = wrap_angle(gate.yaw - state.yaw);
    return p;
}

std::optional<Eigen::Vector2d> project(const DroneState& state, const Eigen::Vector3d& world_point) {
    const Eigen::Vector3d b = to_body(state, world_point - state.position);
    if (b.x() < kNearPlane) return std::nullopt;
    return body_to_pixel(b);
}

Observation render_observation(const DroneState& state, const Gate& next_gate, double pixel_noise_std, Rng& rng) {
    Observation obs{Eigen::VectorXd::Zero(perception::kObsDim)};
    const Eigen::Vector3d center_body = to_body(state, next_gate.center - state.position);
    if (center_body.x() > kNearPlane) {
        const Eigen::Vector3d u = next_gate.lateral_axis() * next_gate.half_aperture;
        const Eigen::Vector3d w = Eigen::Vector3d::UnitZ() * next_gate.half_aperture;
        const Eigen::Vector3d c = next_gate.center;
        const Eigen::Vector3d corners[4] = {c + u + w, c - u + w, c - u - w, c + u - w};
        for (int k = 0; k < 4; ++k) draw_edge(obs.pixels, state, corners[k], corners[(k + 1) % 4]);
    }
    if (pixel_noise_std > 0.0) {
        for (Eigen::Index i = 0; i < obs.pixels.size(); ++i) obs.pixels(i) += pixel_noise_std * rng.normal();
    }
    obs.pixels = obs.pixels.cwiseMax(0.0).cwiseMin(1.0);
    return obs;
}

VelocityCommand expert_command(const DroneState& state, const Gate& next_gate, const ExpertGains& gains) {
    const Eigen::Vector3d offset = next_gate.center - state.position;
    const double r = offset.norm();
    VelocityCommand cmd;
    if (r > 1e-9) {
        const double speed = std::max(std::min(gains.min_speed, kMaxSpeed), kMaxSpeed * std::min(1.0, r / gains.slow_radius));
        const Eigen::Vector3d v_body = to_body(state, offset / r * speed);
        cmd.vx = v_body.x();
        cmd.vy = v_body.y();
        cmd.vz = v_body.z();
    }
    const GateRelativePose pose = relative_gate_pose(state, next_gate);
    const double w = gains.align_radius > 0.0 ? std::clamp(pose.r / gains.align_radius, 0.0, 1.0) : 1.0;
    const double heading_error = w * pose.theta + (1.0 - w) * pose.psi;
    cmd.yaw_rate = std::clamp(gains.yaw_gain * heading_error, -kMaxYawRate, kMaxYawRate);
    return cmd.clamped();
}

DroneState step_dynamics(const DroneState& state, const VelocityCommand& cmd, const DynamicsConfig& dyn) {
    if (!state.finite() || !cmd.finite()) throw ContractViolation("step_dynamics: non-finite state or command");
    if (!(dyn.dt > 0.0) || !(dyn.tau > 0.0)) throw ContractViolation("step_dynamics: dt and tau must be positive");
    const VelocityCommand c = cmd.clamped();
    const double gain = dyn.dt / dyn.tau;
    DroneState next = state;
    const Eigen::Vector3d target = to_world(state.yaw, {c.vx, c.vy, c.vz});
    next.velocity = state.velocity + gain * (target - state.velocity);
    next.position = state.position + next.velocity * dyn.dt;
    next.yaw_rate = state.yaw_rate + gain * (c.yaw_rate - state.yaw_rate);
    next.yaw = wrap_angle(state.yaw + next.yaw_rate * dyn.dt);
    next.time = state.time + dyn.dt;
    return next;
}

GateEvent check_gate_event(const DroneState& prev, const DroneState& cur, const Gate& gate) {
    const Eigen::Vector3d n = gate.normal();
    const double s0 = n.dot(prev.position - gate.center);
    const double s1 = n.dot(cur.position - gate.center);
    if (!(s0 < 0.0 && s1 >= 0.0)) return GateEvent::none;
    const double t = s0 / (s0 - s1);
    const Eigen::Vector3d hit = prev.position + t * (cur.position - prev.position);
    const Eigen::Vector3d rel = hit - gate.center;
    const double u = gate.lateral_axis().dot(rel);
    const double w = rel.z();
    return (std::abs(u) <= gate.half_aperture && std::abs(w) <= gate.half_aperture) ? GateEvent::traversed
                                                                                    : GateEvent::missed;
}

Policy expert_policy(const ExpertGains& gains) {
    return [gains](const PolicyInput& in) { return PolicyDecision{expert_command(in.state, in.next_gate, gains), {}}; };
}

std::string to_string(Termination t) {
    switch (t) {
        case Termination::completed:
            return "completed";
        case Termination::missed_gate:
            return "missed_gate";
        case Termination::timeout_gate:
            return "timeout_gate";
        case Termination::max_steps:
            return "max_steps";
    }
    return "unknown";
}

DroneState start_state(const std::vector<Gate>& track, double start_offset, double start_height) {
    if (track.empty()) throw ContractViolation("start_state: empty track");
    const Gate& g = track.front();
    DroneState s;
    s.position = g.center - start_offset * g.normal();
    s.position.z() = start_height;
    s.yaw = g.yaw;
    return s;
}

EpisodeResult run_episode(const Policy& policy, const std::vector<Gate>& track, const EpisodeConfig& config,
                          const Rng& rng) {
    if (track.empty()) throw ContractViolation("run_episode: empty track");
    EpisodeResult result;
    DroneState state = start_state(track, config.start_offset, config.start_height);
    std::size_t target = 0;
    double gate_start = state.time;

    for (std::size_t step = 0; step < config.max_steps; ++step) {
        const Gate& gate = track[target];
        Rng render_rng = rng.split({2, step});
        const Observation obs = render_observation(state, gate, config.pixel_noise_std, render_rng);
        Rng policy_rng = rng.split({1, step});
        PolicyDecision decision = policy(PolicyInput{state, obs, gate, step, policy_rng});
        result.steps = step + 1;
        if (!decision.command.finite()) {
            result.aborted = true;
            result.error = "policy produced a non-finite command at step " + std::to_string(step);
            result.termination = Termination::max_steps;
            return result;
        }
        const VelocityCommand cmd = decision.command.clamped();
        const DroneState next = step_dynamics(state, cmd, config.dynamics);
        if (config.log_trajectory) result.trajectory.push_back({state.time, state, cmd, std::move(decision.prediction)});

        const GateEvent event = check_gate_event(state, next, gate);
        state = next;
        if (event == GateEvent::traversed) {
            ++result.gates_traversed;
            if (result.gates_traversed >= config.max_gates) {
                result.termination = Termination::completed;
                return result;
            }
            target = (target + 1) % track.size();
            gate_start = state.time;
        } else if (event == GateEvent::missed) {
            result.termination = Termination::missed_gate;
            return result;
        }
        if (state.time - gate_start > config.gate_time_budget) {
            result.termination = Termination::timeout_gate;
            return result;
        }
    }
    result.termination = Termination::max_steps;
    return result;
}

std::string trajectory_csv(const EpisodeResult& episode) {
    std::ostringstream out;
    out << "time,x,y,z,yaw,cmd_vx,cmd_vy,cmd_vz,cmd_yaw_rate,std_vx,std_vy,std_vz,std_yaw_rate\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6g", v);
        return std::string(buf);
    };
    for (const auto& p : episode.trajectory) {
        out << num(p.time) << ',' << num(p.state.position.x()) << ',' << num(p.state.position.y()) << ','
            << num(p.state.position.z()) << ',' << num(p.state.yaw) << ',' << num(p.command.vx) << ','
            << num(p.command.vy) << ',' << num(p.command.vz) << ',' << num(p.command.yaw_rate);
        if (p.prediction) {
            const Eigen::Vector4d scale = command_scale();
            for (Eigen::Index d = 0; d < 4; ++d) out << ',' << num(p.prediction->std(d) * scale(d));
        } else {
            out << ",,,,";
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace uqnav::sim
