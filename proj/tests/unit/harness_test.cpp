#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "uqnav/checkpoint.hpp"
#include "uqnav/errors.hpp"
#include "uqnav/harness.hpp"

using namespace uqnav;
using namespace uqnav::harness;

namespace {

ResultsTable synthetic_table(double bc, double ui1, double ui3, double ui5) {
    ResultsTable t;
    const std::vector<NoiseLevel> levels{{0, 0}, {1, 2}, {1.5, 2.5}};
    const std::vector<std::pair<std::string, double>> models{{"BC", bc}, {"BCE-UI1", ui1}, {"BCE-UI3", ui3}, {"BCE-UI5", ui5}};
    for (const auto& [name, hard] : models) {
        for (const auto& l : levels) {
            ResultRow r;
            r.model = name;
            r.radius_noise = l.radius;
            r.height_noise = l.height;
            r.mean_gates = l.radius == 1.5 ? hard : 32.0;
            r.episodes = 20;
            t.rows.push_back(r);
        }
    }
    return t;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("model names") {
    CHECK(parse_model("BC").baseline);
    const ModelSpec ui5 = parse_model("BCE-UI5");
    CHECK_FALSE(ui5.baseline);
    CHECK(ui5.latent_samples == 5);
    CHECK(parse_model("BCE-UI12").latent_samples == 12);
    CHECK_THROWS_AS(parse_model("BCE-UI0"), ContractViolation);
    CHECK_THROWS_AS(parse_model("BCE-UI"), ContractViolation);
    CHECK_THROWS_AS(parse_model("MC-dropout"), ContractViolation);
}

TEST_CASE("default configuration") {
    const RunConfig c = default_config();
    CHECK(c.cmvae_records == 20000);
    CHECK(c.policy_records == 8000);
    CHECK(c.episodes_per_cell == 20);
    CHECK(c.ensemble_members == 5);
    CHECK(c.models == std::vector<std::string>{"BC", "BCE-UI1", "BCE-UI3", "BCE-UI5"});
    REQUIRE(c.noise_levels.size() == 3);
    CHECK(c.noise_levels[0] == NoiseLevel{0, 0});
    CHECK(c.noise_levels[1] == NoiseLevel{1, 2});
    CHECK(c.noise_levels[2] == NoiseLevel{1.5, 2.5});
    CHECK(c.datagen.max_radius_noise <= 0.3);
    CHECK(c.datagen.max_height_noise <= 0.3);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("configuration JSON round trip and partial override") {
    RunConfig c = default_config();
    c.seed = 77;
    c.episodes_per_cell = 3;
    c.models = {"BC", "BCE-UI2"};
    c.noise_levels = {{0.5, 0.25}};
    c.datagen.yaw_spread = 0.4;
    const RunConfig back = config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.seed == 77);
    CHECK(back.models == c.models);

    const RunConfig partial = config_from_json(nlohmann::json{{"seed", 5}, {"evaluation", {{"episodes_per_cell", 2}}}});
    CHECK(partial.seed == 5);
    CHECK(partial.episodes_per_cell == 2);
    CHECK(partial.cmvae_records == 20000);

    RunConfig bad = default_config();
    bad.models = {"BCE-UI0"};
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
    bad = default_config();
    bad.noise_levels = {{-1, 0}};
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
    bad = default_config();
    bad.policy_records = 0;
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("trend verdict predicate") {
    CHECK(trend_verdict(synthetic_table(7, 10, 13, 17)).pass);
    CHECK(trend_verdict(synthetic_table(10, 10, 10, 12)).pass);
    CHECK_FALSE(trend_verdict(synthetic_table(10, 10, 10, 11.9)).pass);
    CHECK_FALSE(trend_verdict(synthetic_table(10, 9, 15, 15)).pass);
    CHECK_FALSE(trend_verdict(synthetic_table(7, 18, 13, 17)).pass);
    CHECK_FALSE(trend_verdict(ResultsTable{}).pass);
    CHECK(trend_verdict(synthetic_table(7, 10, 13, 17)).message.rfind("PASS", 0) == 0);
}

TEST_CASE("results CSV schema") {
    const std::string csv = results_csv(synthetic_table(7, 10, 13, 17));
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "model,radius_noise,height_noise,mean_gates,std_gates,episodes");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 12);
    CHECK(csv.find("BCE-UI5,1.5,2.5,17.0000,0.0000,20\n") != std::string::npos);
    CHECK(csv.find("BC,0,0,32.0000,0.0000,20\n") != std::string::npos);
}

TEST_CASE("generated datasets: counts, pixel range, labels, determinism") {
    const RunConfig c = default_config();
    const GeneratedData d = generate_datasets(c, Rng(1));
    CHECK(d.cmvae.size() == 20000);
    CHECK(d.policy.size() == 8000);

    const Dataset small = generate_dataset(300, c.datagen, c.track, Rng(2));
    CHECK(small == generate_dataset(300, c.datagen, c.track, Rng(2)));
    for (float v : small.observations) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    for (std::size_t i = 0; i < small.size(); ++i) {
        const auto pose = small.pose(i);
        const auto cmd = small.command(i);
        CHECK(pose[0] >= 0.0f);
        CHECK(std::abs(cmd[0]) <= 3.0f);
        CHECK(std::abs(cmd[3]) <= 1.5f);
    }
}

TEST_CASE("missing artifacts are named") {
    const RunConfig c = default_config();
    const Artifacts a{std::filesystem::temp_directory_path() / "uqnav_unit_empty"};
    std::filesystem::remove_all(a.dir);
    std::filesystem::create_directories(a.dir);
    CHECK_THROWS_AS(stage_train_cmvae(c, a), MissingArtifact);
    CHECK_THROWS_AS(stage_train_policy(c, a), MissingArtifact);
    CHECK_THROWS_AS(stage_evaluate(c, a), MissingArtifact);
}

TEST_CASE("small end-to-end pipeline") {
    RunConfig c = default_config();
    c.cmvae_records = 1200;
    c.policy_records = 1100;
    c.cmvae.epochs = 1;
    c.policy.epochs = 1;
    c.baseline.epochs = 1;
    c.ensemble_members = 2;
    c.episodes_per_cell = 2;
    c.episode.max_steps = 200;
    const Artifacts a{std::filesystem::temp_directory_path() / "uqnav_unit_pipeline"};
    std::filesystem::remove_all(a.dir);

    const PipelineReport r = run_full_pipeline(c, a);
    CHECK(r.encoder_file_checksum_before == r.encoder_file_checksum_after);
    CHECK(r.encoder_params_checksum_before == r.encoder_params_checksum_after);
    CHECK(r.table.rows.size() == 12);
    for (const auto& row : r.table.rows) {
        CHECK(row.mean_gates >= 0.0);
        CHECK(row.mean_gates <= 32.0);
        CHECK(row.episodes == 2);
    }
    for (const char* f : {"cmvae_data.uqd", "policy_data.uqd", "cmvae.uqp", "member_0.uqp", "member_1.uqp",
                          "baseline.uqp", "results.csv", "cmvae_loss.csv", "policy_train.csv"}) {
        CHECK_MESSAGE(std::filesystem::exists(a.dir / f), f);
    }

    // Evaluation reads checkpoints only and reproduces the CSV.
    const std::string csv = slurp(a.results());
    std::vector<std::uint64_t> sums;
    for (const char* f : {"cmvae.uqp", "member_0.uqp", "member_1.uqp", "baseline.uqp"}) sums.push_back(file_checksum(a.dir / f));
    stage_evaluate(c, a);
    std::size_t k = 0;
    for (const char* f : {"cmvae.uqp", "member_0.uqp", "member_1.uqp", "baseline.uqp"}) CHECK(file_checksum(a.dir / f) == sums[k++]);
    CHECK(slurp(a.results()) == csv);

    c.threads = 1;
    stage_evaluate(c, a);
    CHECK(slurp(a.results()) == csv);
}
