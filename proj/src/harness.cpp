#include "uqnav/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "uqnav/checkpoint.hpp"
#include "uqnav/errors.hpp"
#include "uqnav/parallel.hpp"
#include "uqnav/uq_propagation.hpp"

namespace uqnav::harness {
namespace {

using nlohmann::json;

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json adam_json(const nn::AdamConfig& a) {
    return {{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

void read_adam(const json& j, nn::AdamConfig& a) {
    read_opt(j, "learning_rate", a.learning_rate);
    read_opt(j, "beta1", a.beta1);
    read_opt(j, "beta2", a.beta2);
    read_opt(j, "epsilon", a.epsilon);
}

json policy_json(const policy::PolicyTrainConfig& p) {
    return {{"epochs", p.epochs}, {"batch_size", p.batch_size}, {"hidden", p.architecture.hidden}, {"adam", adam_json(p.adam)}};
}

void read_policy(const json& j, policy::PolicyTrainConfig& p) {
    read_opt(j, "epochs", p.epochs);
    read_opt(j, "batch_size", p.batch_size);
    read_opt(j, "hidden", p.architecture.hidden);
    if (j.contains("adam")) read_adam(j.at("adam"), p.adam);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

void require_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingArtifact(path.string());
}

double sample_std(const std::vector<std::size_t>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double ss = 0.0;
    for (auto x : xs) ss += (static_cast<double>(x) - mean) * (static_cast<double>(x) - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
    if (cmvae_records == 0 || policy_records == 0) throw ContractViolation("config: dataset sizes must be positive");
    if (ensemble_members == 0) throw ContractViolation("config: ensemble needs at least one member");
    if (episodes_per_cell == 0) throw ContractViolation("config: episodes_per_cell must be positive");
    if (noise_levels.empty()) throw ContractViolation("config: no noise levels");
    for (const auto& n : noise_levels) {
        if (!(n.radius >= 0.0) || !(n.height >= 0.0)) throw ContractViolation("config: noise levels must be >= 0");
    }
    if (models.empty()) throw ContractViolation("config: no models");
    for (const auto& m : models) parse_model(m);
    if (cmvae.epochs == 0 || cmvae.batch_size == 0 || policy.epochs == 0 || policy.batch_size == 0 ||
        baseline.epochs == 0 || baseline.batch_size == 0) {
        throw ContractViolation("config: epochs and batch sizes must be positive");
    }
    if (!(datagen.rollout_fraction >= 0.0 && datagen.rollout_fraction <= 1.0)) {
        throw ContractViolation("config: datagen.rollout_fraction must be in [0, 1]");
    }
    if (!(datagen.max_radius_noise >= 0.0) || !(datagen.max_height_noise >= 0.0) || !(datagen.pixel_noise_std >= 0.0)) {
        throw ContractViolation("config: datagen noise amplitudes must be >= 0");
    }
    track.validate();
}

RunConfig default_config() {
    RunConfig c;
    c.baseline = c.policy;
    return c;
}

json to_json(const RunConfig& c) {
    json noise = json::array();
    for (const auto& n : c.noise_levels) noise.push_back({n.radius, n.height});
    return {
        {"seed", c.seed},
        {"cmvae_records", c.cmvae_records},
        {"policy_records", c.policy_records},
        {"datagen",
         {{"max_radius_noise", c.datagen.max_radius_noise},
          {"max_height_noise", c.datagen.max_height_noise},
          {"lateral_spread", c.datagen.lateral_spread},
          {"vertical_spread", c.datagen.vertical_spread},
          {"along_spread", c.datagen.along_spread},
          {"yaw_spread", c.datagen.yaw_spread},
          {"pixel_noise_std", c.datagen.pixel_noise_std},
          {"rollout_fraction", c.datagen.rollout_fraction},
          {"max_rollout_steps", c.datagen.max_rollout_steps},
          {"rollout_velocity_noise", c.datagen.rollout_velocity_noise},
          {"rollout_yaw_noise", c.datagen.rollout_yaw_noise},
          {"rollout_hold_steps", c.datagen.rollout_hold_steps}}},
        {"cmvae",
         {{"epochs", c.cmvae.epochs},
          {"batch_size", c.cmvae.batch_size},
          {"pose_weight", c.cmvae.weights.pose},
          {"kl_beta", c.cmvae.weights.kl_beta},
          {"adam", adam_json(c.cmvae.adam)}}},
        {"policy", policy_json(c.policy)},
        {"baseline", policy_json(c.baseline)},
        {"ensemble_members", c.ensemble_members},
        {"evaluation",
         {{"noise_levels", noise},
          {"episodes_per_cell", c.episodes_per_cell},
          {"models", c.models},
          {"pixel_noise_std", c.episode.pixel_noise_std},
          {"gate_time_budget", c.episode.gate_time_budget},
          {"max_gates", c.episode.max_gates},
          {"export_trajectories", c.export_trajectories}}},
        {"threads", c.threads},
    };
}

RunConfig config_from_json(const json& j) {
    RunConfig c = default_config();
    read_opt(j, "seed", c.seed);
    read_opt(j, "cmvae_records", c.cmvae_records);
    read_opt(j, "policy_records", c.policy_records);
    read_opt(j, "ensemble_members", c.ensemble_members);
    read_opt(j, "threads", c.threads);
    if (j.contains("datagen")) {
        const auto& d = j.at("datagen");
        read_opt(d, "max_radius_noise", c.datagen.max_radius_noise);
        read_opt(d, "max_height_noise", c.datagen.max_height_noise);
        read_opt(d, "lateral_spread", c.datagen.lateral_spread);
        read_opt(d, "vertical_spread", c.datagen.vertical_spread);
        read_opt(d, "along_spread", c.datagen.along_spread);
        read_opt(d, "yaw_spread", c.datagen.yaw_spread);
        read_opt(d, "pixel_noise_std", c.datagen.pixel_noise_std);
        read_opt(d, "rollout_fraction", c.datagen.rollout_fraction);
        read_opt(d, "max_rollout_steps", c.datagen.max_rollout_steps);
        read_opt(d, "rollout_velocity_noise", c.datagen.rollout_velocity_noise);
        read_opt(d, "rollout_yaw_noise", c.datagen.rollout_yaw_noise);
        read_opt(d, "rollout_hold_steps", c.datagen.rollout_hold_steps);
    }
    if (j.contains("cmvae")) {
        const auto& m = j.at("cmvae");
        read_opt(m, "epochs", c.cmvae.epochs);
        read_opt(m, "batch_size", c.cmvae.batch_size);
        read_opt(m, "pose_weight", c.cmvae.weights.pose);
        read_opt(m, "kl_beta", c.cmvae.weights.kl_beta);
        if (m.contains("adam")) read_adam(m.at("adam"), c.cmvae.adam);
    }
    if (j.contains("policy")) read_policy(j.at("policy"), c.policy);
    if (j.contains("baseline")) read_policy(j.at("baseline"), c.baseline);
    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        if (e.contains("noise_levels")) {
            c.noise_levels.clear();
            for (const auto& n : e.at("noise_levels")) {
                if (!n.is_array() || n.size() != 2) throw ContractViolation("config: noise level must be [radius, height]");
                c.noise_levels.push_back({n.at(0).get<double>(), n.at(1).get<double>()});
            }
        }
        read_opt(e, "episodes_per_cell", c.episodes_per_cell);
        read_opt(e, "models", c.models);
        read_opt(e, "pixel_noise_std", c.episode.pixel_noise_std);
        read_opt(e, "gate_time_budget", c.episode.gate_time_budget);
        read_opt(e, "max_gates", c.episode.max_gates);
        read_opt(e, "export_trajectories", c.export_trajectories);
    }
    c.policy.threads = c.threads;
    c.baseline.threads = c.threads;
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ContractViolation("cannot open config " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ContractViolation("config " + path.string() + " is not valid JSON: " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const json::exception& e) {
        throw ContractViolation("config " + path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Data

namespace {

struct Sample {
    sim::DroneState state;
    std::size_t gate = 0;
};

Sample flight_line_sample(const DataGenConfig& gen, const std::vector<sim::Gate>& gates, Rng& r) {
    const std::size_t k = r.below(gates.size());
    const sim::Gate& gate = gates[k];
    const sim::Gate& prev = gates[(k + gates.size() - 1) % gates.size()];

    Eigen::Vector3d flight = gate.center - prev.center;
    Eigen::Vector3d along = Eigen::Vector3d(flight.x(), flight.y(), 0.0).normalized();
    const Eigen::Vector3d lateral(-along.y(), along.x(), 0.0);

    Sample s;
    s.gate = k;
    // Rejection-sample until the drone is on the approach side of the gate.
    do {
        const double t = r.uniform();
        s.state.position = prev.center + t * flight + lateral * r.uniform(-gen.lateral_spread, gen.lateral_spread) +
                           Eigen::Vector3d::UnitZ() * r.uniform(-gen.vertical_spread, gen.vertical_spread) +
                           along * r.uniform(-gen.along_spread, gen.along_spread);
    } while (gate.normal().dot(s.state.position - gate.center) > -0.1);
    const Eigen::Vector3d to_gate = gate.center - s.state.position;
    s.state.yaw = sim::wrap_angle(std::atan2(to_gate.y(), to_gate.x()) + r.uniform(-gen.yaw_spread, gen.yaw_spread));
    return s;
}

/// Perturbed expert flight from the start pose; nullopt if a gate is missed.
std::optional<Sample> rollout_sample(const DataGenConfig& gen, const std::vector<sim::Gate>& gates,
                                     double base_height, Rng& r) {
    Sample s;
    s.state = sim::start_state(gates, 2.0, base_height);
    const std::size_t steps = r.below(gen.max_rollout_steps + 1);
    const std::size_t hold = std::max<std::size_t>(1, gen.rollout_hold_steps);
    VelocityCommand offset;
    for (std::size_t t = 0; t < steps; ++t) {
        if (t % hold == 0) {
            offset.vx = r.uniform(-gen.rollout_velocity_noise, gen.rollout_velocity_noise);
            offset.vy = r.uniform(-gen.rollout_velocity_noise, gen.rollout_velocity_noise);
            offset.vz = r.uniform(-gen.rollout_velocity_noise, gen.rollout_velocity_noise);
            offset.yaw_rate = r.uniform(-gen.rollout_yaw_noise, gen.rollout_yaw_noise);
        }
        VelocityCommand cmd = sim::expert_command(s.state, gates[s.gate]);
        cmd.vx += offset.vx;
        cmd.vy += offset.vy;
        cmd.vz += offset.vz;
        cmd.yaw_rate += offset.yaw_rate;
        const sim::DroneState next = sim::step_dynamics(s.state, cmd);
        const sim::GateEvent event = sim::check_gate_event(s.state, next, gates[s.gate]);
        s.state = next;
        if (event == sim::GateEvent::missed) return std::nullopt;
        if (event == sim::GateEvent::traversed) s.gate = (s.gate + 1) % gates.size();
    }
    return s;
}

}  // namespace

Dataset generate_dataset(std::size_t records, const DataGenConfig& gen, const sim::TrackConfig& base_track, Rng rng) {
    Dataset data;
    data.observations.reserve(records * data.obs_dim);
    for (std::size_t i = 0; i < records; ++i) {
        Rng r = rng.split(i);
        sim::TrackConfig tc = base_track;
        tc.radius_noise = r.uniform(0.0, gen.max_radius_noise);
        tc.height_noise = r.uniform(0.0, gen.max_height_noise);
        const auto gates = sim::generate_track(tc, r);

        std::optional<Sample> sample;
        if (r.uniform() < gen.rollout_fraction) {
            for (int attempt = 0; attempt < 8 && !sample; ++attempt) {
                sample = rollout_sample(gen, gates, base_track.base_height, r);
            }
        }
        if (!sample) sample = flight_line_sample(gen, gates, r);
        const sim::Gate& gate = gates[sample->gate];

        const auto obs = sim::render_observation(sample->state, gate, gen.pixel_noise_std, r);
        const Eigen::Vector4d pose = sim::relative_gate_pose(sample->state, gate).as_vector();
        const Eigen::Vector4d cmd = sim::expert_command(sample->state, gate).as_vector();
        data.append(std::span<const double>(obs.pixels.data(), static_cast<std::size_t>(obs.pixels.size())),
                    std::span<const double>(pose.data(), 4), std::span<const double>(cmd.data(), 4));
    }
    return data;
}

GeneratedData generate_datasets(const RunConfig& config, Rng rng) {
    return {generate_dataset(config.cmvae_records, config.datagen, config.track, rng.split(1)),
            generate_dataset(config.policy_records, config.datagen, config.track, rng.split(2))};
}

void stage_generate_data(const RunConfig& config, const Artifacts& artifacts) {
    std::filesystem::create_directories(artifacts.dir);
    const GeneratedData data = generate_datasets(config, Rng(config.seed).split(100));
    save_dataset(data.cmvae, artifacts.cmvae_data());
    save_dataset(data.policy, artifacts.policy_data());
}

perception::CmvaeTrainResult stage_train_cmvae(const RunConfig& config, const Artifacts& artifacts) {
    require_file(artifacts.cmvae_data());
    const Dataset data = load_dataset(artifacts.cmvae_data());
    auto result = perception::train_cmvae(data, config.cmvae, Rng(config.seed).split(200));
    perception::save_cmvae(result.params, artifacts.cmvae());

    std::ostringstream log;
    log << "epoch,total,image_mse,pose_mse,kl\n";
    for (const auto& e : result.log) {
        log << e.epoch << ',' << fmt("%.9g", e.train.total) << ',' << fmt("%.9g", e.train.image_mse) << ','
            << fmt("%.9g", e.train.pose_mse) << ',' << fmt("%.9g", e.train.kl) << '\n';
    }
    write_text(artifacts.cmvae_log(), log.str());
    return result;
}

policy::EnsembleTrainResult stage_train_policy(const RunConfig& config, const Artifacts& artifacts) {
    require_file(artifacts.cmvae());
    require_file(artifacts.policy_data());
    const auto encoder = perception::load_cmvae(artifacts.cmvae());
    const Dataset data = load_dataset(artifacts.policy_data());
    auto result = policy::train_ensemble(encoder, data, config.ensemble_members, config.policy,
                                         Rng(config.seed).split(300));
    policy::save_ensemble(result.ensemble, artifacts.dir);

    std::ostringstream log;
    log << "member,initial_held_out_nll,final_held_out_nll\n";
    for (std::size_t i = 0; i < result.reports.size(); ++i) {
        log << i << ',' << fmt("%.9g", result.reports[i].initial_held_out) << ','
            << fmt("%.9g", result.reports[i].final_held_out) << '\n';
    }
    write_text(artifacts.policy_log(), log.str());
    return result;
}

policy::BaselineTrainResult stage_train_baseline(const RunConfig& config, const Artifacts& artifacts) {
    require_file(artifacts.cmvae());
    require_file(artifacts.policy_data());
    const auto encoder = perception::load_cmvae(artifacts.cmvae());
    const Dataset data = load_dataset(artifacts.policy_data());
    auto result = policy::train_baseline_bc(encoder, data, config.baseline, Rng(config.seed).split(400));
    nn::save_checkpoint(result.baseline.net, artifacts.baseline());
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation

ModelSpec parse_model(const std::string& name) {
    if (name == "BC") return {name, true, 1};
    const std::string prefix = "BCE-UI";
    if (name.rfind(prefix, 0) == 0 && name.size() > prefix.size()) {
        const std::string digits = name.substr(prefix.size());
        if (std::all_of(digits.begin(), digits.end(), [](char ch) { return ch >= '0' && ch <= '9'; }) &&
            digits.size() <= 6) {
            const std::size_t n = std::stoul(digits);
            if (n >= 1) return {name, false, n};
        }
    }
    throw ContractViolation("unknown model '" + name + "' (expected BC or BCE-UI<N>)");
}

LoadedModels load_models(const RunConfig& config, const Artifacts& artifacts) {
    LoadedModels m;
    require_file(artifacts.cmvae());
    m.encoder = perception::load_cmvae(artifacts.cmvae());
    const bool need_ensemble = std::any_of(config.models.begin(), config.models.end(),
                                           [](const std::string& s) { return !parse_model(s).baseline; });
    const bool need_baseline = std::any_of(config.models.begin(), config.models.end(),
                                           [](const std::string& s) { return parse_model(s).baseline; });
    if (need_ensemble) m.ensemble = policy::load_ensemble(artifacts.dir, config.ensemble_members);
    if (need_baseline) {
        require_file(artifacts.baseline());
        m.baseline.net = nn::load_checkpoint(artifacts.baseline());
    }
    return m;
}

sim::Policy make_policy(const LoadedModels& models, const ModelSpec& spec) {
    if (spec.baseline) {
        return [&models](const sim::PolicyInput& in) {
            const auto dist = perception::encode(models.encoder, in.observation);
            const auto z = perception::reparameterize_sample(dist, in.rng);
            return sim::PolicyDecision{VelocityCommand::from_normalized(policy::baseline_forward(models.baseline, z)), {}};
        };
    }
    const std::size_t n = spec.latent_samples;
    return [&models, n](const sim::PolicyInput& in) {
        const auto dist = perception::encode(models.encoder, in.observation);
        uq::PredictiveResult pred = uq::predict_from_latent(dist, models.ensemble, n, in.rng);
        const VelocityCommand cmd = VelocityCommand::from_normalized(pred.mean);
        return sim::PolicyDecision{cmd, std::move(pred)};
    };
}

const ResultRow* ResultsTable::find(const std::string& model, const NoiseLevel& noise) const {
    for (const auto& r : rows) {
        if (r.model == model && r.radius_noise == noise.radius && r.height_noise == noise.height) return &r;
    }
    return nullptr;
}

ResultsTable evaluate_models(const LoadedModels& models, const RunConfig& config,
                             const std::filesystem::path& trajectory_dir) {
    config.validate();
    const std::size_t n_models = config.models.size();
    const std::size_t n_cells = config.noise_levels.size();
    const std::size_t n_eps = config.episodes_per_cell;

    std::vector<ModelSpec> specs;
    std::vector<sim::Policy> policies;
    for (const auto& name : config.models) {
        specs.push_back(parse_model(name));
        policies.push_back(make_policy(models, specs.back()));
    }

    const Rng root = Rng(config.seed).split(500);
    sim::EpisodeConfig episode = config.episode;
    episode.log_trajectory = !trajectory_dir.empty();
    episode.start_height = config.track.base_height;
    if (!trajectory_dir.empty()) std::filesystem::create_directories(trajectory_dir);

    struct Outcome {
        std::size_t gates = 0;
        bool aborted = false;
    };
    std::vector<Outcome> outcomes(n_models * n_cells * n_eps);
    parallel_for(outcomes.size(), config.threads, [&](std::size_t task) {
        const std::size_t m = task / (n_cells * n_eps);
        const std::size_t c = (task / n_eps) % n_cells;
        const std::size_t e = task % n_eps;
        sim::TrackConfig tc = config.track;
        tc.radius_noise = config.noise_levels[c].radius;
        tc.height_noise = config.noise_levels[c].height;
        Rng track_rng = root.split({1, c, e});
        const auto track = sim::generate_track(tc, track_rng);
        const sim::EpisodeResult r =
            sim::run_episode(policies[m], track, episode, root.split({2, c, e}));
        outcomes[task] = {r.gates_traversed, r.aborted};
        if (!trajectory_dir.empty()) {
            const auto path = trajectory_dir / (config.models[m] + "_cell" + std::to_string(c) + "_ep" +
                                                std::to_string(e) + ".csv");
            write_text(path, sim::trajectory_csv(r));
        }
    });

    ResultsTable table;
    for (std::size_t m = 0; m < n_models; ++m) {
        for (std::size_t c = 0; c < n_cells; ++c) {
            ResultRow row;
            row.model = config.models[m];
            row.radius_noise = config.noise_levels[c].radius;
            row.height_noise = config.noise_levels[c].height;
            row.episodes = n_eps;
            double sum = 0.0;
            for (std::size_t e = 0; e < n_eps; ++e) {
                const Outcome& o = outcomes[(m * n_cells + c) * n_eps + e];
                row.gates.push_back(o.gates);
                row.aborted += o.aborted ? 1 : 0;
                sum += static_cast<double>(o.gates);
            }
            row.mean_gates = sum / static_cast<double>(n_eps);
            row.std_gates = sample_std(row.gates, row.mean_gates);
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

std::string results_csv(const ResultsTable& table) {
    std::ostringstream out;
    out << "model,radius_noise,height_noise,mean_gates,std_gates,episodes\n";
    for (const auto& r : table.rows) {
        out << r.model << ',' << fmt("%g", r.radius_noise) << ',' << fmt("%g", r.height_noise) << ','
            << fmt("%.4f", r.mean_gates) << ',' << fmt("%.4f", r.std_gates) << ',' << r.episodes << '\n';
    }
    return out.str();
}

std::string results_console(const ResultsTable& table) {
    // Pivot: one line per model, one column per noise level, in first-seen order.
    std::vector<std::string> models;
    std::vector<NoiseLevel> levels;
    for (const auto& r : table.rows) {
        if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
        const NoiseLevel n{r.radius_noise, r.height_noise};
        if (std::find(levels.begin(), levels.end(), n) == levels.end()) levels.push_back(n);
    }
    std::ostringstream out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-10s", "model");
    out << buf;
    for (const auto& l : levels) {
        std::snprintf(buf, sizeof buf, " | R=%-3g H=%-3g     ", l.radius, l.height);
        out << buf;
    }
    out << '\n';
    for (const auto& m : models) {
        std::snprintf(buf, sizeof buf, "%-10s", m.c_str());
        out << buf;
        for (const auto& l : levels) {
            const ResultRow* r = table.find(m, l);
            if (r) {
                std::snprintf(buf, sizeof buf, " | %5.2f +- %5.2f  ", r->mean_gates, r->std_gates);
            } else {
                std::snprintf(buf, sizeof buf, " | %-16s", "-");
            }
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

TrendVerdict trend_verdict(const ResultsTable& table) {
    const NoiseLevel hardest{1.5, 2.5};
    const ResultRow* bc = table.find("BC", hardest);
    const ResultRow* ui1 = table.find("BCE-UI1", hardest);
    const ResultRow* ui5 = table.find("BCE-UI5", hardest);
    if (!bc || !ui1 || !ui5) return {false, "FAIL: table lacks BC/BCE-UI1/BCE-UI5 at noise (1.5, 2.5)"};
    const bool ordered = ui5->mean_gates >= ui1->mean_gates && ui1->mean_gates >= bc->mean_gates;
    const bool margin = ui5->mean_gates >= bc->mean_gates + 2.0;
    std::ostringstream msg;
    msg << (ordered && margin ? "PASS" : "FAIL") << ": at R=1.5 H=2.5 BCE-UI5=" << fmt("%.2f", ui5->mean_gates)
        << " BCE-UI1=" << fmt("%.2f", ui1->mean_gates) << " BC=" << fmt("%.2f", bc->mean_gates)
        << " (need UI5 >= UI1 >= BC and UI5 >= BC + 2)";
    return {ordered && margin, msg.str()};
}

// ---------------------------------------------------------------------------

std::uint64_t file_checksum(const std::filesystem::path& path) { return nn::fnv1a(nn::read_file_bytes(path)); }

ResultsTable stage_evaluate(const RunConfig& config, const Artifacts& artifacts) {
    const LoadedModels models = load_models(config, artifacts);
    const std::uint64_t before = file_checksum(artifacts.cmvae());
    ResultsTable table =
        evaluate_models(models, config, config.export_trajectories ? artifacts.trajectories() : std::filesystem::path{});
    if (file_checksum(artifacts.cmvae()) != before) throw std::logic_error("evaluation modified the encoder checkpoint");
    write_text(artifacts.results(), results_csv(table));
    return table;
}

PipelineReport run_full_pipeline(const RunConfig& config, const Artifacts& artifacts) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    PipelineReport report;
    stage_generate_data(config, artifacts);
    report.cmvae = stage_train_cmvae(config, artifacts);

    report.encoder_file_checksum_before = file_checksum(artifacts.cmvae());
    report.encoder_params_checksum_before = perception::checksum(perception::load_cmvae(artifacts.cmvae()));
    report.ensemble = stage_train_policy(config, artifacts);
    report.baseline = stage_train_baseline(config, artifacts);
    report.encoder_file_checksum_after = file_checksum(artifacts.cmvae());
    report.encoder_params_checksum_after = perception::checksum(perception::load_cmvae(artifacts.cmvae()));

    report.table = stage_evaluate(config, artifacts);
    report.verdict = trend_verdict(report.table);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace uqnav::harness
