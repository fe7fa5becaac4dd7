#include "lanesim/checkpoint.hpp"
#include "lanesim/config.hpp"
#include "lanesim/error.hpp"
#include "lanesim/train.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace lanesim;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("lanesim-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string str() const { return path.string(); }
};

// Small, fast training configuration for harness tests.
ExperimentConfig tiny_dqn_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.agent = "dqn";
    cfg.track = "tracks/gentle-s.track";
    cfg.seeds = {3};
    cfg.episodes = 6;
    cfg.max_env_steps = 3000;
    cfg.out_dir = out_dir;
    cfg.threads = 1;
    cfg.sim.max_steps = 300;
    cfg.hidden = {16, 16};
    cfg.warmup = 64;
    cfg.batch_size = 16;
    cfg.replay_capacity = 2000;
    return cfg;
}

} // namespace

TEST_CASE("config: parse, unknown keys, overrides, resolved echo") {
    SUBCASE("round trip through resolved text") {
        ExperimentConfig cfg;
        cfg.agent = "ddac";
        cfg.seeds = {7, 8};
        cfg.sim.p_flicker = 0.25;
        cfg.hidden = {32, 16};
        const std::string text = resolved_config_text(cfg);
        const ExperimentConfig back = parse_config_text(text);
        CHECK(back.agent == "ddac");
        CHECK(back.seeds == std::vector<std::uint64_t>{7, 8});
        CHECK(back.sim.p_flicker == 0.25);
        CHECK(back.hidden == std::vector<int>{32, 16});
        CHECK(resolved_config_text(back) == text);
    }
    SUBCASE("unknown key is rejected, named") {
        try {
            parse_config_text("[run]\nagnet = dqn\n");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("agnet") != std::string::npos);
        }
    }
    SUBCASE("bad value is rejected") {
        CHECK_THROWS_AS(parse_config_text("[train]\ngamma = banana\n"), ConfigError);
    }
    SUBCASE("override applies") {
        ExperimentConfig cfg;
        apply_override(cfg, "train.gamma=0.95");
        CHECK(cfg.gamma == 0.95);
        CHECK_THROWS_AS(apply_override(cfg, "nosection=1"), ConfigError);
        CHECK_THROWS_AS(apply_override(cfg, "train.nokey=1"), ConfigError);
    }
    SUBCASE("validation rejects bad agents and ranges") {
        ExperimentConfig cfg;
        cfg.agent = "a3c";
        CHECK_THROWS_AS(validate_config(cfg), ConfigError);
        cfg.agent = "dqn";
        cfg.gamma = 1.0;
        CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    }
}

TEST_CASE("featurize layout") {
    ExperimentConfig cfg;
    Observation obs;
    obs.track_pos = 0.5;
    obs.speed_x = 5.0;
    SUBCASE("base features without rays") {
        cfg.use_ranges = false;
        const auto f = featurize(obs, cfg);
        REQUIRE(f.size() == 2);
        CHECK(f[0] == 0.5);
        CHECK(f[1] == doctest::Approx(0.5)); // speed / v_scale
    }
    SUBCASE("ray count mismatch is an error") {
        cfg.use_ranges = true;
        cfg.sim.n_rays = 9;
        CHECK_THROWS_AS(featurize(obs, cfg), Error);
    }
    SUBCASE("rays first, visible flag last") {
        cfg.use_ranges = true;
        cfg.sim.n_rays = 3;
        cfg.sim.flicker = true;
        obs.ranges = {0.1, 0.2, 0.3};
        obs.visible = false;
        const auto f = featurize(obs, cfg);
        REQUIRE(f.size() == 6);
        CHECK(f[0] == 0.1);
        CHECK(f[2] == 0.3);
        CHECK(f[3] == 0.5);
        CHECK(f[5] == 0.0);
        CHECK(feature_size(cfg) == 6);
    }
}

TEST_CASE("checkpoint round-trips tensors, meta, qtable, config exactly") {
    TempDir tmp;
    Checkpoint ckpt;
    ckpt.agent_kind = "dqn";
    ckpt.env_steps = 12345;
    ckpt.episodes_done = 42;
    ckpt.meta["rng.env"] = "987654321 77";
    ckpt.set_meta_double("glimpse.baseline", 0.12345678901234567);
    Tensor& t = ckpt.tensors.add("q/W0", {2, 3});
    t.value = {1.0 / 3.0, -2.5e-17, 3.0, 4.0, 5e300, -0.0};
    ckpt.qcells[{12, 4}] = 0.625;
    ckpt.config_text = "[run]\nagent = dqn\n";

    const std::string path = tmp.str() + "/ckpt.txt";
    ckpt.save(path);
    const Checkpoint back = Checkpoint::load(path);
    CHECK(back.agent_kind == "dqn");
    CHECK(back.env_steps == 12345);
    CHECK(back.episodes_done == 42);
    CHECK(back.meta.at("rng.env") == "987654321 77");
    CHECK(back.meta_double("glimpse.baseline", 0) == 0.12345678901234567);
    const Tensor& bt = back.tensors.at("q/W0");
    REQUIRE(bt.shape == std::vector<std::size_t>{2, 3});
    for (std::size_t i = 0; i < t.value.size(); ++i) CHECK(bt.value[i] == t.value[i]);
    CHECK(back.qcells.at({12, 4}) == 0.625);
    CHECK(back.config_text == "[run]\nagent = dqn\n");
}

TEST_CASE("checkpoint rejects foreign files and version drift") {
    TempDir tmp;
    const std::string path = tmp.str() + "/bad.txt";
    {
        std::ofstream out(path);
        out << "not-a-checkpoint 1\n";
    }
    CHECK_THROWS_AS(Checkpoint::load(path), ConfigError);
    {
        std::ofstream out(path);
        out << "lanesim-checkpoint 999\nend\n";
    }
    CHECK_THROWS_AS(Checkpoint::load(path), ConfigError);
    CHECK_THROWS_AS(Checkpoint::load(tmp.str() + "/missing.txt"), ConfigError);
}

TEST_CASE("train: zero episode budget writes a header-only metrics file") {
    TempDir tmp;
    ExperimentConfig cfg = tiny_dqn_config(tmp.str());
    cfg.episodes = 0;
    const auto outcome = run_train(cfg);
    REQUIRE(outcome.seeds.size() == 1);
    CHECK(outcome.seeds[0].rows.empty());
    const std::string metrics = read_file(outcome.seeds[0].seed_dir + "/metrics.csv");
    CHECK(metrics ==
          "episode,steps,total_reward,on_track_fraction,mean_abs_steer_delta,departed,"
          "lap_completed,epsilon,loss_mean\n");
    // Untrained checkpoint still exists and loads.
    const Checkpoint ckpt = Checkpoint::load(outcome.seeds[0].checkpoint_path);
    CHECK(ckpt.agent_kind == "dqn");
    CHECK(ckpt.env_steps == 0);
}

TEST_CASE("train runs are byte-for-byte deterministic") {
    TempDir tmp;
    ExperimentConfig cfg = tiny_dqn_config(tmp.str() + "/run");
    const auto a = run_train(cfg);
    const std::string ma = read_file(a.seeds[0].seed_dir + "/metrics.csv");
    const std::string ca = read_file(a.seeds[0].checkpoint_path);
    CHECK(!ma.empty());

    // Re-run the exact same config (same out_dir) and compare every output.
    const auto b = run_train(cfg);
    CHECK(read_file(b.seeds[0].seed_dir + "/metrics.csv") == ma);
    CHECK(read_file(b.seeds[0].checkpoint_path) == ca);
}

TEST_CASE("checkpoint resume reproduces uninterrupted training exactly") {
    TempDir tmp_full, tmp_half;
    // Uninterrupted reference: 6 episodes.
    ExperimentConfig cfg_full = tiny_dqn_config(tmp_full.str());
    run_train(cfg_full);

    // Interrupted: 3 episodes, checkpoint, then resume to 6 in place.
    ExperimentConfig cfg_half = tiny_dqn_config(tmp_half.str());
    cfg_half.episodes = 3;
    run_train(cfg_half);
    ExperimentConfig cfg_rest = tiny_dqn_config(tmp_half.str());
    cfg_rest.episodes = 6;
    run_train(cfg_rest, tmp_half.str());

    const std::string full = read_file(tmp_full.str() + "/seed_3/metrics.csv");
    const std::string stitched = read_file(tmp_half.str() + "/seed_3/metrics.csv");
    CHECK(full == stitched);

    // Final training state matches too (config text differs only in out_dir).
    const Checkpoint ca = Checkpoint::load(tmp_full.str() + "/seed_3/checkpoint.txt");
    const Checkpoint cb = Checkpoint::load(tmp_half.str() + "/seed_3/checkpoint.txt");
    CHECK(ca.env_steps == cb.env_steps);
    CHECK(ca.episodes_done == cb.episodes_done);
    CHECK(ca.meta == cb.meta);
    REQUIRE(ca.tensors.names() == cb.tensors.names());
    for (const auto& name : ca.tensors.names()) {
        const auto& va = ca.tensors.at(name).value;
        const auto& vb = cb.tensors.at(name).value;
        REQUIRE(va.size() == vb.size());
        for (std::size_t i = 0; i < va.size(); ++i) CHECK(va[i] == vb[i]);
    }
}

TEST_CASE("evaluation is deterministic and honors the checkpoint config") {
    TempDir tmp;
    ExperimentConfig cfg = tiny_dqn_config(tmp.str());
    const auto outcome = run_train(cfg);

    const auto e1 = run_eval(outcome.seeds[0].checkpoint_path, "tracks/gentle-s.track", 3, 9,
                             tmp.str() + "/eval1");
    const auto e2 = run_eval(outcome.seeds[0].checkpoint_path, "tracks/gentle-s.track", 3, 9,
                             tmp.str() + "/eval2");
    REQUIRE(e1.episodes.size() == 3);
    CHECK(read_file(tmp.str() + "/eval1/eval_episodes.csv") ==
          read_file(tmp.str() + "/eval2/eval_episodes.csv"));
}

// An untrained greedy policy fails on tight-loop in one of two modes: it
// steers off (the majority outcome for departing inits) or its argmax tile
// brakes the car to a standstill. Either way it never completes a lap.
TEST_CASE("untrained DQN fails on tight-loop: departs or stalls, never laps") {
    TempDir tmp;
    for (std::uint64_t seed : {4ull, 3ull}) { // one departing init, one stalling init
        ExperimentConfig cfg = tiny_dqn_config(tmp.str() + "/u" + std::to_string(seed));
        cfg.seeds = {seed};
        cfg.episodes = 0; // untrained checkpoint
        cfg.sim.max_steps = 600;
        const auto outcome = run_train(cfg);
        const auto eval =
            run_eval(outcome.seeds[0].checkpoint_path, "tracks/tight-loop.track", 5, 3, "");
        int departed = 0;
        double mean_speed = 0.0;
        for (const auto& r : eval.episodes) {
            CHECK_FALSE(r.lap_completed);
            departed += r.departed ? 1 : 0;
            mean_speed += r.mean_speed / eval.episodes.size();
        }
        const bool mostly_departs = departed >= 3;
        const bool stalls = mean_speed < 1.0;
        CHECK((mostly_departs || stalls));
    }
}

TEST_CASE("re-running from the resolved config echo reproduces outputs") {
    TempDir tmp;
    ExperimentConfig cfg = tiny_dqn_config(tmp.str() + "/run");
    cfg.episodes = 3;
    run_train(cfg);
    const std::string metrics = read_file(tmp.str() + "/run/seed_3/metrics.csv");
    const std::string ckpt = read_file(tmp.str() + "/run/seed_3/checkpoint.txt");

    const ExperimentConfig echoed = load_config_file(tmp.str() + "/run/config.resolved");
    run_train(echoed);
    CHECK(read_file(tmp.str() + "/run/seed_3/metrics.csv") == metrics);
    CHECK(read_file(tmp.str() + "/run/seed_3/checkpoint.txt") == ckpt);
}

TEST_CASE("apprentice run writes demos, source log, clone and expert checkpoints") {
    TempDir tmp;
    ExperimentConfig cfg;
    cfg.agent = "apprentice";
    cfg.track = "tracks/gentle-s.track";
    cfg.seeds = {7};
    cfg.out_dir = tmp.str();
    cfg.threads = 1;
    cfg.demo_episodes = 3;
    cfg.fit_epochs_per_episode = 1;
    cfg.final_fit_epochs = 2;
    const auto outcome = run_train(cfg);
    REQUIRE(outcome.seeds.size() == 1);
    const std::string dir = outcome.seeds[0].seed_dir;

    // Demo CSV schema: feature_0..feature_n, steer, accel, brake.
    std::ifstream demos(dir + "/demos.csv");
    REQUIRE(demos.good());
    std::string header;
    std::getline(demos, header);
    CHECK(header.find("feature_0,") == 0);
    CHECK(header.find("steer,accel,brake") != std::string::npos);
    std::size_t demo_rows = 0;
    std::string line;
    while (std::getline(demos, line)) {
        if (!line.empty()) ++demo_rows;
    }
    CHECK(demo_rows > 0);
    CHECK(demo_rows <= 3u * 2000u);

    // Companion per-step source log aligns with the dataset.
    std::ifstream sources(dir + "/demo_sources.csv");
    REQUIRE(sources.good());
    std::getline(sources, header);
    CHECK(header == "source");
    std::size_t source_rows = 0;
    while (std::getline(sources, line)) {
        if (line == "model" || line == "expert") ++source_rows;
        else if (!line.empty()) FAIL("unexpected source tag: ", line);
    }
    CHECK(source_rows == demo_rows);

    // Expert pseudo-checkpoint evaluates and laps.
    const auto eval =
        run_eval(dir + "/expert_checkpoint.txt", "tracks/gentle-s.track", 2, 11, "");
    for (const auto& r : eval.episodes) CHECK(r.lap_completed);
}

TEST_CASE("divergent training aborts with partial metrics preserved") {
    TempDir tmp;
    ExperimentConfig cfg = tiny_dqn_config(tmp.str());
    cfg.learning_rate = 1e9; // blows up shortly after training starts
    cfg.episodes = 50;
    cfg.sim.max_steps = 120; // several whole episodes complete before warmup
    cfg.warmup = 400;
    CHECK_THROWS_AS(run_train(cfg), NumericError);
    // Episodes finished before the divergence are retained on disk.
    const std::string metrics = read_file(tmp.str() + "/seed_3/metrics.csv");
    CHECK(metrics.find("episode,steps,") == 0);
    CHECK(std::count(metrics.begin(), metrics.end(), '\n') >= 2);
}

TEST_CASE("compare: a run against itself has zero deltas") {
    TempDir tmp;
    ExperimentConfig cfg = tiny_dqn_config(tmp.str());
    run_train(cfg);
    const auto rows = run_compare(tmp.str(), tmp.str(), tmp.str() + "/cmp.csv");
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
        if (std::isfinite(r.a_median)) {
            CHECK(r.delta_a_minus_b == 0.0);
        }
        CHECK(r.a_median == r.b_median);
    }
    CHECK(fs::exists(tmp.str() + "/cmp.csv"));

    // Runs without readable metrics are a schema error.
    CHECK_THROWS_AS(run_compare(tmp.str(), tmp.str() + "/nope", ""), ConfigError);
}

TEST_CASE("demo: expert trajectory CSV has the full column set") {
    TempDir tmp;
    ExperimentConfig cfg;
    const std::string out = tmp.str() + "/traj.csv";
    run_demo(cfg, "", "tracks/gentle-s.track", 50, 5, out);
    std::ifstream in(out);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,s,d,psi,v,steer,accel,brake,reward");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 50);
}

TEST_CASE("cli binary: exit codes and basic plumbing") {
    const char* env_bin = std::getenv("LANESIM_BIN");
    const std::string bin = env_bin ? env_bin : "build/tools/lanesim";
    REQUIRE(fs::exists(bin));
    TempDir tmp;

    const auto run = [&](const std::string& args) {
        const std::string cmd = bin + " " + args + " >" + tmp.str() +
                                "/stdout.txt 2>" + tmp.str() + "/stderr.txt";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };

    SUBCASE("bad config key exits 2") {
        CHECK(run("train --set run.bogus=1 --out " + tmp.str() + "/x") == 2);
    }
    SUBCASE("bad track file exits 2") {
        CHECK(run("train --track /nonexistent.track --episodes 1 --seeds 1 --out " +
                  tmp.str() + "/x") == 2);
    }
    SUBCASE("divergence exits 3") {
        CHECK(run("train --episodes 20 --seeds 1 --max-env-steps 4000 "
                  "--set train.learning_rate=1e9 --set sim.max_steps=200 "
                  "--set replay.warmup=64 --out " +
                  tmp.str() + "/div") == 3);
    }
    SUBCASE("LANESIM_OUT_DIR overrides the output directory") {
        const std::string cmd = "LANESIM_OUT_DIR=" + tmp.str() + "/envdir " + bin +
                                " train --episodes 0 --seeds 2 >/dev/null 2>&1";
        CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
        CHECK(fs::exists(tmp.str() + "/envdir/seed_2/metrics.csv"));
    }
    SUBCASE("episodes 0 writes a header-only metrics file, exits 0") {
        CHECK(run("train --episodes 0 --seeds 5 --max-env-steps 100 --out " + tmp.str() +
                  "/run") == 0);
        const std::string metrics = read_file(tmp.str() + "/run/seed_5/metrics.csv");
        CHECK(metrics.find("episode,steps,") == 0);
        CHECK(metrics.find('\n') == metrics.size() - 1);
    }
    SUBCASE("train/eval/demo round trip through the CLI") {
        const std::string run_dir = tmp.str() + "/run";
        CHECK(run("train --episodes 3 --seeds 7 --max-env-steps 1200 "
                  "--set sim.max_steps=200 --set replay.warmup=64 "
                  "--set train.hidden=8,8 --out " +
                  run_dir) == 0);
        CHECK(run("eval --checkpoint " + run_dir + "/seed_7/checkpoint.txt " +
                  "--track tracks/gentle-s.track --episodes 2 --seed 1 --out " + tmp.str() +
                  "/eval") == 0);
        CHECK(fs::exists(tmp.str() + "/eval/eval_stats.csv"));
        CHECK(run("demo --checkpoint " + run_dir + "/seed_7/checkpoint.txt " +
                  "--track tracks/gentle-s.track --steps 20 --out " + tmp.str() +
                  "/traj.csv") == 0);
        CHECK(run("compare --a " + run_dir + " --b " + run_dir + " --out " + tmp.str() +
                  "/cmp.csv") == 0);
    }
}
