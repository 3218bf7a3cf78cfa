#pragma once
// End-to-end orchestration: data generation, training stages, closed-loop
// evaluation over noise levels, and the gates-traversed results table.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "uqnav/dataset.hpp"
#include "uqnav/gate_sim.hpp"
#include "uqnav/perception.hpp"
#include "uqnav/policy.hpp"

namespace uqnav::harness {

struct NoiseLevel {
    double radius = 0.0;
    double height = 0.0;
    bool operator==(const NoiseLevel&) const = default;
};

/// Training-distribution sampler on mildly perturbed tracks. A record is either a
/// pose scattered around the flight line between consecutive gates, or the end
/// state of an expert rollout with persistent command perturbations.
struct DataGenConfig {
    double max_radius_noise = 0.3;
    double max_height_noise = 0.3;
    double lateral_spread = 1.2;   // m, uniform half-width across the flight line
    double vertical_spread = 1.5;  // m
    double along_spread = 0.5;     // m
    double yaw_spread = 0.8;       // rad around the bearing to the gate
    double pixel_noise_std = 0.05;
    double rollout_fraction = 0.5;
    std::size_t max_rollout_steps = 600;
    double rollout_velocity_noise = 0.8;  // m/s, uniform half-width per body axis
    double rollout_yaw_noise = 0.5;       // rad/s
    std::size_t rollout_hold_steps = 20;  // perturbation resampled every this many steps
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::size_t cmvae_records = 20000;
    std::size_t policy_records = 8000;
    DataGenConfig datagen;
    perception::CmvaeTrainConfig cmvae;
    policy::PolicyTrainConfig policy;
    policy::PolicyTrainConfig baseline;
    std::size_t ensemble_members = 5;
    std::vector<NoiseLevel> noise_levels{{0.0, 0.0}, {1.0, 2.0}, {1.5, 2.5}};
    std::size_t episodes_per_cell = 20;
    std::vector<std::string> models{"BC", "BCE-UI1", "BCE-UI3", "BCE-UI5"};
    sim::EpisodeConfig episode;
    sim::TrackConfig track;  // noise fields are overridden per cell
    std::size_t threads = 0;
    bool export_trajectories = false;

    /// Throws ContractViolation on non-positive sizes, negative noise, unknown model names.
    void validate() const;
};

RunConfig default_config();
nlohmann::json to_json(const RunConfig& config);
/// Missing fields keep their defaults; unknown model names are rejected by validate().
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Artifact locations inside an output directory.
struct Artifacts {
    std::filesystem::path dir;

    std::filesystem::path cmvae_data() const { return dir / "cmvae_data.uqd"; }
    std::filesystem::path policy_data() const { return dir / "policy_data.uqd"; }
    std::filesystem::path cmvae() const { return dir / "cmvae.uqp"; }
    std::filesystem::path cmvae_log() const { return dir / "cmvae_loss.csv"; }
    std::filesystem::path policy_log() const { return dir / "policy_train.csv"; }
    std::filesystem::path baseline() const { return dir / "baseline.uqp"; }
    std::filesystem::path results() const { return dir / "results.csv"; }
    std::filesystem::path trajectories() const { return dir / "trajectories"; }
};

// ---------------------------------------------------------------------------
// Stages

/// One record: rendered observation, true relative pose of the next gate, expert command.
Dataset generate_dataset(std::size_t records, const DataGenConfig& gen, const sim::TrackConfig& track, Rng rng);

struct GeneratedData {
    Dataset cmvae;
    Dataset policy;
};

GeneratedData generate_datasets(const RunConfig& config, Rng rng);

void stage_generate_data(const RunConfig& config, const Artifacts& artifacts);
perception::CmvaeTrainResult stage_train_cmvae(const RunConfig& config, const Artifacts& artifacts);
policy::EnsembleTrainResult stage_train_policy(const RunConfig& config, const Artifacts& artifacts);
policy::BaselineTrainResult stage_train_baseline(const RunConfig& config, const Artifacts& artifacts);

// ---------------------------------------------------------------------------
// Evaluation

struct ModelSpec {
    std::string name;
    bool baseline = false;
    std::size_t latent_samples = 1;  // N for BCE-UI<N>
};

/// "BC" or "BCE-UI<N>" with N >= 1.
ModelSpec parse_model(const std::string& name);

struct LoadedModels {
    perception::CmvaeParams encoder;
    policy::EnsembleParams ensemble;
    policy::BaselinePolicyParams baseline;
};

LoadedModels load_models(const RunConfig& config, const Artifacts& artifacts);

/// Closed-loop policy for one model; N latent samples per step for ensembles.
sim::Policy make_policy(const LoadedModels& models, const ModelSpec& spec);

struct ResultRow {
    std::string model;
    double radius_noise = 0.0;
    double height_noise = 0.0;
    double mean_gates = 0.0;
    double std_gates = 0.0;
    std::size_t episodes = 0;
    std::size_t aborted = 0;
    std::vector<std::size_t> gates;  // per episode
};

struct ResultsTable {
    std::vector<ResultRow> rows;

    const ResultRow* find(const std::string& model, const NoiseLevel& noise) const;
};

/// Every (model, noise level) cell runs the same episodes_per_cell tracks.
ResultsTable evaluate_models(const LoadedModels& models, const RunConfig& config,
                             const std::filesystem::path& trajectory_dir = {});

std::string results_csv(const ResultsTable& table);
std::string results_console(const ResultsTable& table);

struct TrendVerdict {
    bool pass = false;
    std::string message;
};

/// At the largest noise level (1.5, 2.5): UI5 >= UI1 >= BC and UI5 >= BC + 2 gates.
TrendVerdict trend_verdict(const ResultsTable& table);

// ---------------------------------------------------------------------------

struct PipelineReport {
    ResultsTable table;
    TrendVerdict verdict;
    perception::CmvaeTrainResult cmvae;
    policy::EnsembleTrainResult ensemble;
    policy::BaselineTrainResult baseline;
    std::uint64_t encoder_file_checksum_before = 0;
    std::uint64_t encoder_file_checksum_after = 0;
    std::uint64_t encoder_params_checksum_before = 0;
    std::uint64_t encoder_params_checksum_after = 0;
    double seconds = 0.0;
};

/// gen-data, train-cmvae, train-policy, train-baseline, evaluate; writes results.csv.
PipelineReport run_full_pipeline(const RunConfig& config, const Artifacts& artifacts);

ResultsTable stage_evaluate(const RunConfig& config, const Artifacts& artifacts);

std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace uqnav::harness
