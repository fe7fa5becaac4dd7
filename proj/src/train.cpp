#include "lanesim/train.hpp"

#include "lanesim/apprentice.hpp"
#include "lanesim/ddac.hpp"
#include "lanesim/dqn.hpp"
#include "lanesim/drqn.hpp"
#include "lanesim/error.hpp"
#include "lanesim/glimpse.hpp"
#include "lanesim/qtable.hpp"
#include "lanesim/replay.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace lanesim {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double lerp(double from, double to, double t) { return from + (to - from) * t; }

int argmax_lowest(std::span<const double> xs) {
    int best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] > xs[best]) best = static_cast<int>(i);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Checkpoint helpers

void save_params_into(Checkpoint& ckpt, const ParamSet& params) {
    for (const auto& name : params.names()) {
        const Tensor& src = params.at(name);
        Tensor& dst = ckpt.tensors.add(name, src.shape);
        dst.value = src.value;
    }
}

void load_params_from(const Checkpoint& ckpt, ParamSet& params) {
    for (const auto& name : params.names()) {
        if (!ckpt.tensors.contains(name)) {
            throw ConfigError("checkpoint: missing tensor '" + name + "'");
        }
        const Tensor& src = ckpt.tensors.at(name);
        Tensor& dst = params.at(name);
        if (src.shape != dst.shape) {
            throw ConfigError("checkpoint: tensor '" + name +
                              "' shape does not match the configured network");
        }
        dst.value = src.value;
    }
}

void save_transitions(Checkpoint& ckpt, const std::string& prefix,
                      const std::vector<const Transition*>& ts) {
    const std::size_t n = ts.size();
    const std::size_t dim = n ? ts[0]->obs.size() : 0;
    Tensor& obs = ckpt.tensors.add(prefix + "/obs", {n, dim});
    Tensor& next_obs = ckpt.tensors.add(prefix + "/next_obs", {n, dim});
    Tensor& scal = ckpt.tensors.add(prefix + "/scalars", {n, 6});
    for (std::size_t i = 0; i < n; ++i) {
        const Transition& t = *ts[i];
        std::copy(t.obs.begin(), t.obs.end(), obs.value.begin() + i * dim);
        std::copy(t.next_obs.begin(), t.next_obs.end(), next_obs.value.begin() + i * dim);
        scal.value[i * 6 + 0] = t.action;
        scal.value[i * 6 + 1] = t.action_cont[0];
        scal.value[i * 6 + 2] = t.action_cont[1];
        scal.value[i * 6 + 3] = t.reward;
        scal.value[i * 6 + 4] = t.terminal ? 1.0 : 0.0;
        scal.value[i * 6 + 5] = t.step_count;
    }
}

std::vector<Transition> load_transitions(const Checkpoint& ckpt, const std::string& prefix) {
    if (!ckpt.tensors.contains(prefix + "/obs")) return {};
    const Tensor& obs = ckpt.tensors.at(prefix + "/obs");
    const Tensor& next_obs = ckpt.tensors.at(prefix + "/next_obs");
    const Tensor& scal = ckpt.tensors.at(prefix + "/scalars");
    const std::size_t n = obs.shape[0];
    const std::size_t dim = obs.shape[1];
    std::vector<Transition> ts(n);
    for (std::size_t i = 0; i < n; ++i) {
        Transition& t = ts[i];
        t.obs.assign(obs.value.begin() + i * dim, obs.value.begin() + (i + 1) * dim);
        t.next_obs.assign(next_obs.value.begin() + i * dim,
                          next_obs.value.begin() + (i + 1) * dim);
        t.action = static_cast<int>(scal.value[i * 6 + 0]);
        t.action_cont = {scal.value[i * 6 + 1], scal.value[i * 6 + 2]};
        t.reward = scal.value[i * 6 + 3];
        t.terminal = scal.value[i * 6 + 4] != 0.0;
        t.step_count = static_cast<int>(scal.value[i * 6 + 5]);
    }
    return ts;
}

void save_replay_buffer(Checkpoint& ckpt, const ReplayBuffer& buffer) {
    std::vector<const Transition*> ts;
    ts.reserve(buffer.size());
    for (std::size_t i = 0; i < buffer.size(); ++i) ts.push_back(&buffer.at(i));
    save_transitions(ckpt, "replay", ts);
}

void load_replay_buffer(const Checkpoint& ckpt, ReplayBuffer& buffer) {
    buffer.clear();
    for (auto& t : load_transitions(ckpt, "replay")) buffer.push(std::move(t));
}

void save_episode_replay(Checkpoint& ckpt, const EpisodeReplay& buffer) {
    std::vector<const Transition*> ts;
    ts.reserve(buffer.transition_count());
    Tensor& lens = ckpt.tensors.add("replay/episode_len", {buffer.episode_count()});
    for (std::size_t e = 0; e < buffer.episode_count(); ++e) {
        lens.value[e] = static_cast<double>(buffer.episode(e).size());
        for (const auto& t : buffer.episode(e)) ts.push_back(&t);
    }
    save_transitions(ckpt, "replay", ts);
}

void load_episode_replay(const Checkpoint& ckpt, EpisodeReplay& buffer) {
    buffer.clear();
    if (!ckpt.tensors.contains("replay/episode_len")) return;
    auto ts = load_transitions(ckpt, "replay");
    const Tensor& lens = ckpt.tensors.at("replay/episode_len");
    std::size_t pos = 0;
    for (double len_d : lens.value) {
        const auto len = static_cast<std::size_t>(len_d);
        std::vector<Transition> ep(ts.begin() + pos, ts.begin() + pos + len);
        buffer.push_episode(std::move(ep));
        pos += len;
    }
}

std::string rng_text(const Rng& rng) {
    return std::to_string(rng.key()) + " " + std::to_string(rng.counter());
}

Rng rng_from_text(const std::string& text) {
    std::istringstream ss(text);
    std::uint64_t key = 0, counter = 0;
    if (!(ss >> key >> counter)) throw ConfigError("checkpoint: bad rng state");
    return Rng(key, counter);
}

} // namespace

Streams Streams::make(std::uint64_t master_seed) {
    Streams st;
    st.env = Rng::stream(master_seed, "env");
    st.flicker = Rng::stream(master_seed, "flicker");
    st.init = Rng::stream(master_seed, "init");
    st.explore = Rng::stream(master_seed, "explore");
    st.replay = Rng::stream(master_seed, "replay");
    st.glimpse = Rng::stream(master_seed, "glimpse");
    return st;
}

void save_streams(Checkpoint& ckpt, const Streams& st) {
    ckpt.meta["rng.env"] = rng_text(st.env);
    ckpt.meta["rng.flicker"] = rng_text(st.flicker);
    ckpt.meta["rng.init"] = rng_text(st.init);
    ckpt.meta["rng.explore"] = rng_text(st.explore);
    ckpt.meta["rng.replay"] = rng_text(st.replay);
    ckpt.meta["rng.glimpse"] = rng_text(st.glimpse);
}

void load_streams(const Checkpoint& ckpt, Streams& st) {
    const auto get = [&](const char* key) {
        const auto it = ckpt.meta.find(key);
        if (it == ckpt.meta.end()) throw ConfigError("checkpoint: missing rng state");
        return rng_from_text(it->second);
    };
    st.env = get("rng.env");
    st.flicker = get("rng.flicker");
    st.init = get("rng.init");
    st.explore = get("rng.explore");
    st.replay = get("rng.replay");
    st.glimpse = get("rng.glimpse");
}

double median(std::vector<double> values) {
    if (values.empty()) return kNan;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return (n % 2) ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---------------------------------------------------------------------------
// Metrics CSV

void write_metrics_header(std::ostream& out, bool glimpse_columns) {
    out << "episode,steps,total_reward,on_track_fraction,mean_abs_steer_delta,departed,"
           "lap_completed,epsilon,loss_mean";
    if (glimpse_columns) out << ",glimpse_position_entropy,sensor_multiplies_per_step";
    out << "\n";
}

void write_metrics_row(std::ostream& out, const EpisodeResult& r, bool glimpse_columns) {
    out << r.episode << "," << r.steps << "," << format_double(r.total_reward) << ","
        << format_double(r.on_track_fraction) << "," << format_double(r.mean_abs_steer_delta)
        << "," << (r.departed ? 1 : 0) << "," << (r.lap_completed ? 1 : 0) << ","
        << format_double(r.epsilon) << "," << format_double(r.loss_mean);
    if (glimpse_columns) {
        out << "," << format_double(r.glimpse_entropy) << ","
            << format_double(r.sensor_multiplies);
    }
    out << "\n";
}

std::vector<EpisodeResult> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("metrics: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("metrics: empty file '" + path + "'");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) header.push_back(col);
    }
    const auto col_index = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw ConfigError("metrics: '" + path + "' lacks column '" + name + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_episode = col_index("episode");
    const std::size_t c_steps = col_index("steps");
    const std::size_t c_reward = col_index("total_reward");
    const std::size_t c_otf = col_index("on_track_fraction");
    const std::size_t c_steer = col_index("mean_abs_steer_delta");
    const std::size_t c_departed = col_index("departed");
    const std::size_t c_lap = col_index("lap_completed");
    const std::size_t c_eps = col_index("epsilon");
    const std::size_t c_loss = col_index("loss_mean");

    std::vector<EpisodeResult> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() < header.size()) {
            throw ConfigError("metrics: malformed row in '" + path + "'");
        }
        EpisodeResult r;
        r.episode = std::stoi(fields[c_episode]);
        r.steps = std::stoi(fields[c_steps]);
        r.total_reward = std::stod(fields[c_reward]);
        r.on_track_fraction = std::stod(fields[c_otf]);
        r.mean_abs_steer_delta = std::stod(fields[c_steer]);
        r.departed = fields[c_departed] == "1";
        r.lap_completed = fields[c_lap] == "1";
        r.epsilon = std::stod(fields[c_eps]);
        r.loss_mean = std::stod(fields[c_loss]);
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Agent drivers

namespace {

class AgentDriver {
  public:
    virtual ~AgentDriver() = default;

    virtual double explore_value(double progress) const = 0;
    virtual void begin_episode() {}
    virtual ContinuousAction act_train(const Observation& obs, double explore, Streams& st) = 0;
    virtual ContinuousAction act_eval(const Observation& obs, const CarState& state,
                                      const TrackSpec& track, Streams& st) = 0;
    virtual void record(const StepResult& result, Streams& st) = 0;
    virtual double train_tick(std::int64_t env_step, Streams& st) = 0; // NaN when idle
    virtual void end_episode(Streams& st) { (void)st; }
    virtual void fill_extras(EpisodeResult& row) const { (void)row; }
    virtual bool glimpse_columns() const { return false; }
    virtual void save_into(Checkpoint& ckpt) const = 0;
    virtual void restore_from(const Checkpoint& ckpt) = 0;
};

class DqnDriver : public AgentDriver {
  public:
    DqnDriver(const ExperimentConfig& cfg, Streams& st, int input_size)
        : cfg_(cfg), spec_{cfg.n_steer, cfg.n_throttle},
          agent_(input_size, spec_.count(), make_options(cfg), st.init),
          buffer_(static_cast<std::size_t>(cfg.replay_capacity)) {}

    DqnDriver(const ExperimentConfig& cfg, Streams& st)
        : DqnDriver(cfg, st, feature_size(cfg)) {}

    static DqnOptions make_options(const ExperimentConfig& cfg) {
        DqnOptions opt;
        opt.hidden = cfg.hidden;
        opt.gamma = cfg.gamma;
        opt.learning_rate = cfg.learning_rate;
        opt.use_target_net = cfg.target_net;
        opt.target_sync_every = cfg.target_sync;
        return opt;
    }

    double explore_value(double progress) const override {
        const double t = cfg_.eps_fraction > 0.0
                             ? std::min(1.0, progress / cfg_.eps_fraction)
                             : 1.0;
        return lerp(cfg_.eps0, cfg_.eps_min, t);
    }

    ContinuousAction act_train(const Observation& obs, double explore, Streams& st) override {
        pending_features_ = train_features(obs, st);
        pending_action_ = agent_.act(pending_features_, explore, st.explore);
        return spec_.decode(pending_action_);
    }

    ContinuousAction act_eval(const Observation& obs, const CarState&, const TrackSpec&,
                              Streams& st) override {
        const auto f = eval_features(obs, st);
        const auto q = agent_.q_values(f);
        return spec_.decode(argmax_lowest(q));
    }

    void record(const StepResult& result, Streams& st) override {
        Transition t;
        t.obs = std::move(pending_features_);
        t.next_obs = next_features(result, st);
        t.action = pending_action_;
        t.reward = result.reward;
        t.terminal = result.terminal;
        t.step_count = result.state.step_count;
        if (cfg_.replay_enabled) {
            buffer_.push(std::move(t));
        } else {
            last_ = std::move(t);
            has_last_ = true;
        }
    }

    double train_tick(std::int64_t env_step, Streams& st) override {
        if (env_step % cfg_.train_every != 0) return kNan;
        if (cfg_.replay_enabled) {
            const auto need = static_cast<std::size_t>(
                std::max(cfg_.warmup, cfg_.batch_size));
            if (buffer_.size() < need) return kNan;
            const auto batch =
                buffer_.sample(static_cast<std::size_t>(cfg_.batch_size), st.replay);
            return agent_.train_batch(batch);
        }
        if (!has_last_) return kNan;
        const Transition* p = &last_;
        return agent_.train_batch(std::span<const Transition* const>(&p, 1));
    }

    void save_into(Checkpoint& ckpt) const override {
        save_params_into(ckpt, agent_.params());
        if (cfg_.replay_enabled) save_replay_buffer(ckpt, buffer_);
        ckpt.set_meta_i64("dqn.updates", agent_.updates());
    }

    void restore_from(const Checkpoint& ckpt) override {
        load_params_from(ckpt, agent_.params());
        agent_.set_updates(ckpt.meta_i64("dqn.updates", 0));
        if (cfg_.replay_enabled) load_replay_buffer(ckpt, buffer_);
        if (agent_.options().use_target_net) agent_.sync_target();
    }

  protected:
    virtual std::vector<double> train_features(const Observation& obs, Streams& st) {
        (void)st;
        return featurize(obs, cfg_);
    }
    virtual std::vector<double> eval_features(const Observation& obs, Streams& st) {
        (void)st;
        return featurize(obs, cfg_);
    }
    virtual std::vector<double> next_features(const StepResult& result, Streams& st) {
        (void)st;
        return featurize(result.obs, cfg_);
    }

    const ExperimentConfig& cfg_;
    ActionSpec spec_;
    DqnAgent agent_;
    ReplayBuffer buffer_;
    std::vector<double> pending_features_;
    int pending_action_ = 0;
    Transition last_;
    bool has_last_ = false;
};

// Glimpse wrapper around the DQN driver: a REINFORCE-trained categorical
// policy picks the ray window the Q-network sees.
class GlimpseDqnDriver : public DqnDriver {
  public:
    GlimpseDqnDriver(const ExperimentConfig& cfg, Streams& st)
        : DqnDriver(cfg, st, cfg.glimpse_window + 2 + (cfg.sim.flicker ? 1 : 0)),
          gcfg_{cfg.sim.n_rays, cfg.glimpse_window},
          policy_(2, gcfg_.n_positions(), cfg.glimpse_hidden, "glimpse") {
        gcfg_.validate();
        policy_.init(policy_params_, st.init);
        baseline_.decay = cfg.baseline_decay;
    }

    void begin_episode() override {
        last_window_mean_ = 0.0;
        episode_steps_.clear();
        episode_rewards_.clear();
        entropy_sum_ = 0.0;
        entropy_count_ = 0;
    }

    void record(const StepResult& result, Streams& st) override {
        DqnDriver::record(result, st);
        episode_rewards_.push_back(result.reward);
    }

    void end_episode(Streams& st) override {
        (void)st;
        if (episode_steps_.empty()) return;
        // Discounted return-to-go of the driving reward per glimpse decision.
        double g = 0.0;
        for (std::size_t i = episode_steps_.size(); i-- > 0;) {
            g = episode_rewards_[i] + cfg_.gamma * g;
            episode_steps_[i].return_to_go = g;
        }
        reinforce_update(policy_, policy_params_, episode_steps_, baseline_,
                         cfg_.glimpse_lr);
        episode_steps_.clear();
        episode_rewards_.clear();
    }

    void fill_extras(EpisodeResult& row) const override {
        row.glimpse_entropy = entropy_count_ ? entropy_sum_ / entropy_count_ : 0.0;
        row.sensor_multiplies =
            static_cast<double>(sensor_block_multiplies(gcfg_, cfg_.hidden.front()));
    }

    bool glimpse_columns() const override { return true; }

    void save_into(Checkpoint& ckpt) const override {
        DqnDriver::save_into(ckpt);
        save_params_into(ckpt, policy_params_);
        ckpt.set_meta_double("glimpse.baseline", baseline_.value);
    }

    void restore_from(const Checkpoint& ckpt) override {
        DqnDriver::restore_from(ckpt);
        load_params_from(ckpt, policy_params_);
        baseline_.value = ckpt.meta_double("glimpse.baseline", 0.0);
    }

  protected:
    std::vector<double> train_features(const Observation& obs, Streams& st) override {
        auto sel = policy_.select(policy_params_, context_for(obs), st.glimpse);
        entropy_sum_ += categorical_entropy(sel.probs);
        ++entropy_count_;
        auto feats = attended(obs, sel.position);
        note_window(feats, sel.position);
        episode_steps_.push_back({std::move(sel), 0.0});
        return feats;
    }

    std::vector<double> eval_features(const Observation& obs, Streams& st) override {
        (void)st;
        const auto sel = policy_.select_greedy(policy_params_, context_for(obs));
        auto feats = attended(obs, sel.position);
        note_window(feats, sel.position);
        return feats;
    }

    std::vector<double> next_features(const StepResult& result, Streams& st) override {
        (void)st;
        // The transition's next view reuses the current window position; the
        // next decision re-attends (and refreshes the context) when it happens.
        return attended(result.obs, last_position_);
    }

  private:
    std::vector<double> context_for(const Observation& obs) const {
        return {last_window_mean_, obs.speed_x / cfg_.sim.v_scale};
    }

    std::vector<double> attended(const Observation& obs, int position) const {
        auto feats = attend_observe(obs, position, gcfg_);
        // Same speed normalization as the plain feature path.
        feats[feats.size() - 1] /= cfg_.sim.v_scale;
        if (cfg_.sim.flicker) feats.push_back(obs.visible ? 1.0 : 0.0);
        return feats;
    }

    void note_window(std::span<const double> feats, int position) {
        double mean = 0.0;
        for (int i = 0; i < gcfg_.window; ++i) mean += feats[static_cast<std::size_t>(i)];
        last_window_mean_ = mean / gcfg_.window;
        last_position_ = position;
    }

    GlimpseConfig gcfg_;
    GlimpsePolicy policy_;
    ParamSet policy_params_;
    ReinforceBaseline baseline_;
    std::vector<GlimpseStep> episode_steps_;
    std::vector<double> episode_rewards_;
    double last_window_mean_ = 0.0;
    int last_position_ = 0;
    double entropy_sum_ = 0.0;
    std::int64_t entropy_count_ = 0;
};

class DdacDriver : public AgentDriver {
  public:
    DdacDriver(const ExperimentConfig& cfg, Streams& st)
        : cfg_(cfg), agent_(feature_size(cfg), make_options(cfg), st.init),
          buffer_(static_cast<std::size_t>(cfg.replay_capacity)) {}

    static DdacOptions make_options(const ExperimentConfig& cfg) {
        DdacOptions opt;
        opt.actor_hidden = cfg.hidden;
        opt.critic_hidden = cfg.hidden;
        opt.gamma = cfg.gamma;
        opt.lr_actor = cfg.lr_actor;
        opt.lr_critic = cfg.lr_critic;
        return opt;
    }

    double explore_value(double progress) const override {
        const double t = cfg_.noise_fraction > 0.0
                             ? std::min(1.0, progress / cfg_.noise_fraction)
                             : 1.0;
        return lerp(cfg_.noise0, cfg_.noise_min, t);
    }

    ContinuousAction act_train(const Observation& obs, double explore, Streams& st) override {
        pending_features_ = featurize(obs, cfg_);
        pending_pair_ = agent_.act(pending_features_, explore, st.explore);
        return action_from_steer_throttle(pending_pair_[0], pending_pair_[1]);
    }

    ContinuousAction act_eval(const Observation& obs, const CarState&, const TrackSpec&,
                              Streams& st) override {
        (void)st;
        const auto f = featurize(obs, cfg_);
        Rng unused;
        const auto pair = agent_.act(f, 0.0, unused);
        return action_from_steer_throttle(pair[0], pair[1]);
    }

    void record(const StepResult& result, Streams& st) override {
        (void)st;
        Transition t;
        t.obs = std::move(pending_features_);
        t.next_obs = featurize(result.obs, cfg_);
        t.action_cont = pending_pair_;
        t.reward = result.reward;
        t.terminal = result.terminal;
        t.step_count = result.state.step_count;
        if (cfg_.replay_enabled) {
            buffer_.push(std::move(t));
        } else {
            last_ = std::move(t);
            has_last_ = true;
        }
    }

    double train_tick(std::int64_t env_step, Streams& st) override {
        if (env_step % cfg_.train_every != 0) return kNan;
        if (cfg_.replay_enabled) {
            const auto need =
                static_cast<std::size_t>(std::max(cfg_.warmup, cfg_.batch_size));
            if (buffer_.size() < need) return kNan;
            const auto batch =
                buffer_.sample(static_cast<std::size_t>(cfg_.batch_size), st.replay);
            return agent_.train_batch(batch);
        }
        if (!has_last_) return kNan;
        const Transition* p = &last_;
        return agent_.train_batch(std::span<const Transition* const>(&p, 1));
    }

    void save_into(Checkpoint& ckpt) const override {
        save_params_into(ckpt, agent_.actor_params());
        save_params_into(ckpt, agent_.critic_params());
        if (cfg_.replay_enabled) save_replay_buffer(ckpt, buffer_);
    }

    void restore_from(const Checkpoint& ckpt) override {
        load_params_from(ckpt, agent_.actor_params());
        load_params_from(ckpt, agent_.critic_params());
        if (cfg_.replay_enabled) load_replay_buffer(ckpt, buffer_);
    }

  private:
    const ExperimentConfig& cfg_;
    DdacAgent agent_;
    ReplayBuffer buffer_;
    std::vector<double> pending_features_;
    std::array<double, 2> pending_pair_{};
    Transition last_;
    bool has_last_ = false;
};

class DrqnDriver : public AgentDriver {
  public:
    DrqnDriver(const ExperimentConfig& cfg, Streams& st)
        : cfg_(cfg), spec_{cfg.n_steer, cfg.n_throttle},
          agent_(feature_size(cfg), spec_.count(), make_options(cfg), st.init),
          buffer_(static_cast<std::size_t>(cfg.replay_capacity)) {}

    static DrqnOptions make_options(const ExperimentConfig& cfg) {
        DrqnOptions opt;
        opt.lstm_hidden = cfg.lstm_hidden;
        opt.gamma = cfg.gamma;
        opt.learning_rate = cfg.learning_rate;
        opt.fragment_len = cfg.fragment_len;
        opt.bptt_len = cfg.bptt_len;
        return opt;
    }

    double explore_value(double progress) const override {
        const double t = cfg_.eps_fraction > 0.0
                             ? std::min(1.0, progress / cfg_.eps_fraction)
                             : 1.0;
        return lerp(cfg_.eps0, cfg_.eps_min, t);
    }

    void begin_episode() override {
        agent_.begin_episode();
        current_episode_.clear();
    }

    ContinuousAction act_train(const Observation& obs, double explore, Streams& st) override {
        pending_features_ = featurize(obs, cfg_);
        pending_action_ = agent_.act(pending_features_, explore, st.explore);
        return spec_.decode(pending_action_);
    }

    ContinuousAction act_eval(const Observation& obs, const CarState&, const TrackSpec&,
                              Streams& st) override {
        (void)st;
        const auto q = agent_.q_values(featurize(obs, cfg_));
        return spec_.decode(argmax_lowest(q));
    }

    void record(const StepResult& result, Streams& st) override {
        (void)st;
        Transition t;
        t.obs = std::move(pending_features_);
        t.next_obs = featurize(result.obs, cfg_);
        t.action = pending_action_;
        t.reward = result.reward;
        t.terminal = result.terminal;
        t.step_count = result.state.step_count;
        current_episode_.push_back(std::move(t));
    }

    double train_tick(std::int64_t env_step, Streams& st) override {
        if (env_step % cfg_.drqn_train_every != 0) return kNan;
        if (buffer_.transition_count() < static_cast<std::size_t>(cfg_.warmup)) return kNan;
        double loss = 0.0;
        for (int i = 0; i < cfg_.batch_fragments; ++i) {
            const auto frag = buffer_.sample_fragment(
                static_cast<std::size_t>(cfg_.fragment_len), st.replay);
            loss += agent_.train_fragment(frag);
        }
        return loss / cfg_.batch_fragments;
    }

    void end_episode(Streams& st) override {
        (void)st;
        buffer_.push_episode(std::move(current_episode_));
        current_episode_.clear();
    }

    void save_into(Checkpoint& ckpt) const override {
        save_params_into(ckpt, agent_.params());
        save_episode_replay(ckpt, buffer_);
    }

    void restore_from(const Checkpoint& ckpt) override {
        load_params_from(ckpt, agent_.params());
        load_episode_replay(ckpt, buffer_);
    }

  private:
    const ExperimentConfig& cfg_;
    ActionSpec spec_;
    DrqnAgent agent_;
    EpisodeReplay buffer_;
    std::vector<Transition> current_episode_;
    std::vector<double> pending_features_;
    int pending_action_ = 0;
};

class QTableDriver : public AgentDriver {
  public:
    QTableDriver(const ExperimentConfig& cfg)
        : cfg_(cfg), spec_{cfg.n_steer, cfg.n_throttle},
          disc_(std::vector<Discretizer::Dim>{
              {cfg.track_pos_lo, cfg.track_pos_hi, cfg.track_pos_bins},
              {cfg.speed_lo, cfg.speed_hi, cfg.speed_bins}}) {}

    double explore_value(double progress) const override {
        const double t = cfg_.eps_fraction > 0.0
                             ? std::min(1.0, progress / cfg_.eps_fraction)
                             : 1.0;
        return lerp(cfg_.eps0, cfg_.eps_min, t);
    }

    ContinuousAction act_train(const Observation& obs, double explore, Streams& st) override {
        pending_state_ = state_of(obs);
        std::vector<double> q(static_cast<std::size_t>(spec_.count()));
        for (int a = 0; a < spec_.count(); ++a) {
            q[static_cast<std::size_t>(a)] = table_.get(pending_state_, a);
        }
        pending_action_ = epsilon_greedy(q, explore, st.explore);
        return spec_.decode(pending_action_);
    }

    ContinuousAction act_eval(const Observation& obs, const CarState&, const TrackSpec&,
                              Streams& st) override {
        (void)st;
        return spec_.decode(table_.greedy_action(state_of(obs), spec_.count()));
    }

    void record(const StepResult& result, Streams& st) override {
        (void)st;
        q_update(table_, pending_state_, pending_action_, result.reward,
                 state_of(result.obs), result.terminal, spec_.count(), cfg_.alpha,
                 cfg_.gamma);
    }

    double train_tick(std::int64_t, Streams&) override { return kNan; }

    void save_into(Checkpoint& ckpt) const override {
        for (const auto& [key, value] : table_.cells()) ckpt.qcells[key] = value;
    }

    void restore_from(const Checkpoint& ckpt) override {
        for (const auto& [key, value] : ckpt.qcells) table_.set(key.first, key.second, value);
    }

  private:
    std::uint64_t state_of(const Observation& obs) const {
        const double f[2] = {obs.track_pos, obs.speed_x};
        return disc_.index(f);
    }

    const ExperimentConfig& cfg_;
    ActionSpec spec_;
    Discretizer disc_;
    QTable table_;
    std::uint64_t pending_state_ = 0;
    int pending_action_ = 0;
};

// Eval-only drivers -----------------------------------------------------------

class ExpertDriver : public AgentDriver {
  public:
    explicit ExpertDriver(const ExpertConfig& expert) : expert_(expert) {}

    double explore_value(double) const override { return 0.0; }
    ContinuousAction act_train(const Observation&, double, Streams&) override {
        throw Error("expert driver is evaluation-only");
    }
    ContinuousAction act_eval(const Observation&, const CarState& state,
                              const TrackSpec& track, Streams&) override {
        return p_controller(state, track, expert_);
    }
    void record(const StepResult&, Streams&) override {}
    double train_tick(std::int64_t, Streams&) override { return kNan; }
    void save_into(Checkpoint&) const override {}
    void restore_from(const Checkpoint&) override {}

  private:
    ExpertConfig expert_;
};

class CloneDriver : public AgentDriver {
  public:
    CloneDriver(const ExperimentConfig& cfg, Streams& st) : cfg_(cfg) {
        MlpSpec spec;
        spec.layer_sizes.push_back(feature_size(cfg));
        for (int h : cfg.apprentice_hidden) spec.layer_sizes.push_back(h);
        spec.layer_sizes.push_back(2);
        net_ = Mlp(spec, "clone");
        net_.init(params_, st.init);
    }

    const Mlp& net() const { return net_; }
    ParamSet& params() { return params_; }

    double explore_value(double) const override { return 0.0; }
    ContinuousAction act_train(const Observation&, double, Streams&) override {
        throw Error("clone driver is evaluation-only; train via the apprentice pipeline");
    }
    ContinuousAction act_eval(const Observation& obs, const CarState&, const TrackSpec&,
                              Streams&) override {
        return clone_action(net_.forward(params_, featurize(obs, cfg_)));
    }
    void record(const StepResult&, Streams&) override {}
    double train_tick(std::int64_t, Streams&) override { return kNan; }
    void save_into(Checkpoint& ckpt) const override { save_params_into(ckpt, params_); }
    void restore_from(const Checkpoint& ckpt) override { load_params_from(ckpt, params_); }

  private:
    const ExperimentConfig& cfg_;
    Mlp net_;
    ParamSet params_;
};

std::unique_ptr<AgentDriver> make_driver(const std::string& kind, const ExperimentConfig& cfg,
                                         Streams& st) {
    if (kind == "dqn") return std::make_unique<DqnDriver>(cfg, st);
    if (kind == "glimpse-dqn") return std::make_unique<GlimpseDqnDriver>(cfg, st);
    if (kind == "ddac") return std::make_unique<DdacDriver>(cfg, st);
    if (kind == "drqn") return std::make_unique<DrqnDriver>(cfg, st);
    if (kind == "qtable") return std::make_unique<QTableDriver>(cfg);
    if (kind == "apprentice") return std::make_unique<CloneDriver>(cfg, st);
    throw ConfigError("unknown agent kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Episode rollout shared by training and evaluation

struct RolloutHooks {
    // act: returns the action for the current observation.
    std::function<ContinuousAction(const Observation&)> act;
    // after_step: called once per step with the result.
    std::function<void(const ContinuousAction&, const StepResult&)> after_step;
};

EpisodeResult roll_episode(Environment& env, Streams& st, const ExperimentConfig& cfg,
                           const RolloutHooks& hooks) {
    EpisodeResult row;
    auto [state, obs] = env.reset(st.env, st.flicker);
    (void)state;
    double steer_delta_sum = 0.0;
    double speed_sum = 0.0;
    double prev_steer = 0.0;
    bool have_prev = false;
    int on_track_steps = 0;
    bool terminal = false;
    while (!terminal) {
        const ContinuousAction action = hooks.act(obs);
        const StepResult result = env.step(action, st.flicker);
        hooks.after_step(action, result);
        ++row.steps;
        row.total_reward += result.reward;
        speed_sum += result.state.v;
        if (!result.departed) ++on_track_steps;
        if (have_prev) steer_delta_sum += std::abs(action.steer - prev_steer);
        prev_steer = action.steer;
        have_prev = true;
        row.departed = result.departed;
        row.lap_completed = result.lap_completed;
        obs = result.obs;
        terminal = result.terminal;
    }
    row.on_track_fraction =
        row.departed ? static_cast<double>(on_track_steps) / cfg.sim.max_steps
                     : (row.steps > 0 ? 1.0 : 0.0);
    row.mean_abs_steer_delta =
        row.steps >= 2 ? steer_delta_sum / (row.steps - 1) : 0.0;
    row.mean_speed = row.steps > 0 ? speed_sum / row.steps : 0.0;
    return row;
}

Checkpoint make_checkpoint(const ExperimentConfig& cfg, const AgentDriver& driver,
                           const Streams& st, std::int64_t env_steps,
                           std::int64_t episodes_done) {
    Checkpoint ckpt;
    ckpt.agent_kind = cfg.agent;
    ckpt.env_steps = env_steps;
    ckpt.episodes_done = episodes_done;
    ckpt.config_text = resolved_config_text(cfg);
    save_streams(ckpt, st);
    driver.save_into(ckpt);
    return ckpt;
}

// ---------------------------------------------------------------------------
// Apprenticeship pipeline: gradual expert-to-model handover with the expert
// labeling every visited state, refitting the clone after each episode.

std::vector<EpisodeResult> train_apprentice_seed(const ExperimentConfig& cfg,
                                                 const TrackSpec& track,
                                                 const std::string& seed_dir, Streams& st,
                                                 std::ofstream& metrics) {
    ExpertConfig expert{cfg.k_steer, cfg.k_psi, cfg.k_speed, cfg.v_target};
    CloneDriver clone(cfg, st);
    Environment env(track, cfg.sim);
    DemoDataset data;
    std::vector<EpisodeResult> rows;

    const FeaturizeFn feats = [&cfg](const Observation& o) { return featurize(o, cfg); };
    const ModelActFn model_act = [&](std::span<const double> f) {
        return clone_action(clone.net().forward(clone.params(), f));
    };

    for (int ep = 0; ep < cfg.demo_episodes; ++ep) {
        const double epsilon =
            cfg.demo_episodes == 1
                ? 1.0
                : static_cast<double>(ep) / (cfg.demo_episodes - 1);

        EpisodeResult row;
        row.episode = ep;
        row.epsilon = epsilon;
        const std::size_t row_start = data.size();
        {
            // Inline episode so per-step stats line up with the dataset rows.
            auto [state, obs] = env.reset(st.env, st.flicker);
            (void)state;
            double steer_delta_sum = 0.0, speed_sum = 0.0, prev_steer = 0.0;
            bool have_prev = false;
            int on_track_steps = 0;
            bool terminal = false;
            while (!terminal) {
                const auto f = feats(obs);
                const ContinuousAction expert_action = p_controller(env.state(), track, expert);
                ContinuousAction driven = expert_action;
                bool from_model = false;
                if (epsilon > 0.0) {
                    const auto choice =
                        blended_step(model_act(f), expert_action, epsilon, st.explore);
                    driven = choice.action;
                    from_model = choice.from_model;
                }
                data.append(f, {expert_action.steer, throttle_axis_of(expert_action)},
                            from_model);
                const StepResult result = env.step(driven, st.flicker);
                ++row.steps;
                row.total_reward += result.reward;
                speed_sum += result.state.v;
                if (!result.departed) ++on_track_steps;
                if (have_prev) steer_delta_sum += std::abs(driven.steer - prev_steer);
                prev_steer = driven.steer;
                have_prev = true;
                row.departed = result.departed;
                row.lap_completed = result.lap_completed;
                obs = result.obs;
                terminal = result.terminal;
            }
            row.on_track_fraction =
                row.departed ? static_cast<double>(on_track_steps) / cfg.sim.max_steps
                             : (row.steps > 0 ? 1.0 : 0.0);
            row.mean_abs_steer_delta =
                row.steps >= 2 ? steer_delta_sum / (row.steps - 1) : 0.0;
            row.mean_speed = row.steps > 0 ? speed_sum / row.steps : 0.0;
        }
        (void)row_start;
        row.loss_mean = fit_regression(data, clone.net(), clone.params(),
                                       cfg.fit_epochs_per_episode, cfg.apprentice_lr,
                                       cfg.apprentice_batch, st.replay);
        write_metrics_row(metrics, row, false);
        metrics.flush();
        rows.push_back(row);
    }
    if (cfg.final_fit_epochs > 0 && data.size() > 0) {
        fit_regression(data, clone.net(), clone.params(), cfg.final_fit_epochs,
                       cfg.apprentice_lr, cfg.apprentice_batch, st.replay);
    }

    // Demo dataset CSV + per-step source companion log.
    {
        std::ofstream demo(seed_dir + "/demos.csv");
        const std::size_t n_feat = data.size() ? data.features[0].size() : 0;
        for (std::size_t j = 0; j < n_feat; ++j) demo << "feature_" << j << ",";
        demo << "steer,accel,brake\n";
        std::ofstream sources(seed_dir + "/demo_sources.csv");
        sources << "source\n";
        for (std::size_t i = 0; i < data.size(); ++i) {
            for (std::size_t j = 0; j < n_feat; ++j) {
                demo << format_double(data.features[i][j]) << ",";
            }
            const auto action = action_from_steer_throttle(data.actions[i][0],
                                                           data.actions[i][1]);
            demo << format_double(action.steer) << "," << format_double(action.accel) << ","
                 << format_double(action.brake) << "\n";
            sources << (data.from_model[i] ? "model" : "expert") << "\n";
        }
    }

    // Cloned-policy checkpoint plus the expert pseudo-checkpoint.
    Checkpoint ckpt = make_checkpoint(cfg, clone, st, 0, cfg.demo_episodes);
    ckpt.save(seed_dir + "/checkpoint.txt");

    Checkpoint expert_ckpt;
    expert_ckpt.agent_kind = "expert";
    expert_ckpt.config_text = resolved_config_text(cfg);
    expert_ckpt.set_meta_double("expert.k_steer", expert.k_steer);
    expert_ckpt.set_meta_double("expert.k_psi", expert.k_psi);
    expert_ckpt.set_meta_double("expert.k_speed", expert.k_speed);
    expert_ckpt.set_meta_double("expert.v_target", expert.v_target);
    save_streams(expert_ckpt, st);
    expert_ckpt.save(seed_dir + "/expert_checkpoint.txt");
    return rows;
}

// ---------------------------------------------------------------------------
// RL training loop for one seed

std::vector<EpisodeResult> train_rl_seed(const ExperimentConfig& cfg, const TrackSpec& track,
                                         const std::string& seed_dir, Streams& st,
                                         const Checkpoint* resume, std::ofstream& metrics) {
    auto driver = make_driver(cfg.agent, cfg, st);
    std::int64_t env_steps = 0;
    int first_episode = 0;
    if (resume) {
        if (resume->agent_kind != cfg.agent) {
            throw ConfigError("resume checkpoint is for agent '" + resume->agent_kind +
                              "', config says '" + cfg.agent + "'");
        }
        driver->restore_from(*resume);
        load_streams(*resume, st);
        env_steps = resume->env_steps;
        first_episode = static_cast<int>(resume->episodes_done);
    }

    Environment env(track, cfg.sim);
    const bool glimpse_cols = driver->glimpse_columns();
    std::vector<EpisodeResult> rows;

    const auto progress = [&](std::int64_t step) {
        return cfg.max_env_steps > 0
                   ? std::min(1.0, static_cast<double>(step) /
                                       static_cast<double>(cfg.max_env_steps))
                   : 1.0;
    };

    int ep = first_episode;
    for (; ep < cfg.episodes; ++ep) {
        if (cfg.max_env_steps > 0 && env_steps >= cfg.max_env_steps) break;
        driver->begin_episode();
        double loss_sum = 0.0;
        int loss_count = 0;
        const RolloutHooks hooks{
            [&](const Observation& obs) {
                return driver->act_train(obs, driver->explore_value(progress(env_steps)), st);
            },
            [&](const ContinuousAction&, const StepResult& result) {
                driver->record(result, st);
                ++env_steps;
                const double loss = driver->train_tick(env_steps, st);
                if (!std::isnan(loss)) {
                    loss_sum += loss;
                    ++loss_count;
                }
            }};
        const double epsilon_at_start = driver->explore_value(progress(env_steps));
        EpisodeResult stats = roll_episode(env, st, cfg, hooks);
        stats.episode = ep;
        stats.epsilon = epsilon_at_start;
        stats.loss_mean = loss_count ? loss_sum / loss_count : kNan;
        driver->end_episode(st);
        driver->fill_extras(stats);
        write_metrics_row(metrics, stats, glimpse_cols);
        metrics.flush();
        rows.push_back(stats);

        if (cfg.checkpoint_every > 0 && (ep + 1) % cfg.checkpoint_every == 0) {
            make_checkpoint(cfg, *driver, st, env_steps, ep + 1)
                .save(seed_dir + "/checkpoint.txt");
        }
    }
    make_checkpoint(cfg, *driver, st, env_steps, ep).save(seed_dir + "/checkpoint.txt");
    return rows;
}

std::string seed_dir_for(const std::string& out_dir, std::uint64_t seed) {
    return out_dir + "/seed_" + std::to_string(seed);
}

SeedOutcome train_one_seed(const ExperimentConfig& cfg, const TrackSpec& track,
                           std::uint64_t seed, const std::string& resume_dir) {
    SeedOutcome outcome;
    outcome.seed = seed;
    outcome.seed_dir = seed_dir_for(cfg.out_dir, seed);
    outcome.checkpoint_path = outcome.seed_dir + "/checkpoint.txt";
    fs::create_directories(outcome.seed_dir);

    std::unique_ptr<Checkpoint> resume;
    if (!resume_dir.empty()) {
        resume = std::make_unique<Checkpoint>(
            Checkpoint::load(seed_dir_for(resume_dir, seed) + "/checkpoint.txt"));
    }

    const std::string metrics_path = outcome.seed_dir + "/metrics.csv";
    std::ofstream metrics;
    if (resume && fs::exists(metrics_path)) {
        metrics.open(metrics_path, std::ios::app);
    } else {
        metrics.open(metrics_path, std::ios::trunc);
        write_metrics_header(metrics, cfg.agent == "glimpse-dqn");
    }
    if (!metrics) throw Error("cannot write '" + metrics_path + "'");

    Streams st = Streams::make(seed);
    if (cfg.agent == "apprentice") {
        if (resume) throw ConfigError("apprentice runs do not support --resume");
        outcome.rows = train_apprentice_seed(cfg, track, outcome.seed_dir, st, metrics);
    } else {
        outcome.rows = train_rl_seed(cfg, track, outcome.seed_dir, st, resume.get(), metrics);
    }
    return outcome;
}

} // namespace

TrainOutcome run_train(const ExperimentConfig& cfg, const std::string& resume_dir) {
    validate_config(cfg);
    TrackSpec track = TrackSpec::load(cfg.track);
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream rc(cfg.out_dir + "/config.resolved");
        rc << resolved_config_text(cfg);
    }

    TrainOutcome outcome;
    outcome.out_dir = cfg.out_dir;
    outcome.seeds.resize(cfg.seeds.size());

    unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                       : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(cfg.seeds.size()));

    if (workers <= 1) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
            outcome.seeds[i] = train_one_seed(cfg, track, cfg.seeds[i], resume_dir);
        }
        return outcome;
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cfg.seeds.size()) return;
            try {
                outcome.seeds[i] = train_one_seed(cfg, track, cfg.seeds[i], resume_dir);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return outcome;
}

EvalOutcome evaluate_checkpoint(const Checkpoint& ckpt, const TrackSpec& track, int episodes,
                                std::uint64_t seed) {
    ExperimentConfig cfg = parse_config_text(ckpt.config_text);
    Streams st = Streams::make(seed);

    std::unique_ptr<AgentDriver> driver;
    if (ckpt.agent_kind == "expert") {
        ExpertConfig expert;
        expert.k_steer = ckpt.meta_double("expert.k_steer", expert.k_steer);
        expert.k_psi = ckpt.meta_double("expert.k_psi", expert.k_psi);
        expert.k_speed = ckpt.meta_double("expert.k_speed", expert.k_speed);
        expert.v_target = ckpt.meta_double("expert.v_target", expert.v_target);
        driver = std::make_unique<ExpertDriver>(expert);
    } else {
        driver = make_driver(ckpt.agent_kind, cfg, st);
        driver->restore_from(ckpt);
    }

    Environment env(track, cfg.sim);
    EvalOutcome outcome;
    for (int ep = 0; ep < episodes; ++ep) {
        driver->begin_episode();
        const RolloutHooks hooks{
            [&](const Observation& obs) {
                return driver->act_eval(obs, env.state(), env.track(), st);
            },
            [](const ContinuousAction&, const StepResult&) {}};
        EpisodeResult row = roll_episode(env, st, cfg, hooks);
        row.episode = ep;
        row.epsilon = 0.0;
        row.loss_mean = kNan;
        outcome.episodes.push_back(row);
    }
    return outcome;
}

namespace {

struct Stat {
    std::string name;
    double mean, med, min, max;
};

std::vector<Stat> eval_stats(const std::vector<EpisodeResult>& rows) {
    const auto collect = [&](auto getter) {
        std::vector<double> xs;
        xs.reserve(rows.size());
        for (const auto& r : rows) xs.push_back(getter(r));
        return xs;
    };
    const auto make = [&](const std::string& name, std::vector<double> xs) {
        Stat s;
        s.name = name;
        s.med = median(xs);
        s.mean = 0.0;
        s.min = xs.empty() ? kNan : xs[0];
        s.max = s.min;
        for (double x : xs) {
            s.mean += x;
            s.min = std::min(s.min, x);
            s.max = std::max(s.max, x);
        }
        if (!xs.empty()) s.mean /= static_cast<double>(xs.size());
        return s;
    };
    std::vector<Stat> stats;
    stats.push_back(make("steps", collect([](const auto& r) { return double(r.steps); })));
    stats.push_back(
        make("total_reward", collect([](const auto& r) { return r.total_reward; })));
    stats.push_back(make("on_track_fraction",
                         collect([](const auto& r) { return r.on_track_fraction; })));
    stats.push_back(make("mean_abs_steer_delta",
                         collect([](const auto& r) { return r.mean_abs_steer_delta; })));
    stats.push_back(
        make("mean_speed", collect([](const auto& r) { return r.mean_speed; })));
    stats.push_back(
        make("departed", collect([](const auto& r) { return r.departed ? 1.0 : 0.0; })));
    stats.push_back(make("lap_completed",
                         collect([](const auto& r) { return r.lap_completed ? 1.0 : 0.0; })));
    return stats;
}

} // namespace

EvalOutcome run_eval(const std::string& checkpoint_path, const std::string& track_path,
                     int episodes, std::uint64_t seed, const std::string& out_dir,
                     std::string* summary) {
    const Checkpoint ckpt = Checkpoint::load(checkpoint_path);
    const TrackSpec track = TrackSpec::load(track_path);
    EvalOutcome outcome = evaluate_checkpoint(ckpt, track, episodes, seed);

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream rows_csv(out_dir + "/eval_episodes.csv");
        rows_csv << "episode,steps,total_reward,on_track_fraction,mean_abs_steer_delta,"
                    "departed,lap_completed,mean_speed\n";
        for (const auto& r : outcome.episodes) {
            rows_csv << r.episode << "," << r.steps << "," << format_double(r.total_reward)
                     << "," << format_double(r.on_track_fraction) << ","
                     << format_double(r.mean_abs_steer_delta) << "," << (r.departed ? 1 : 0)
                     << "," << (r.lap_completed ? 1 : 0) << ","
                     << format_double(r.mean_speed) << "\n";
        }
        std::ofstream stats_csv(out_dir + "/eval_stats.csv");
        stats_csv << "metric,mean,median,min,max\n";
        for (const auto& s : eval_stats(outcome.episodes)) {
            stats_csv << s.name << "," << format_double(s.mean) << "," << format_double(s.med)
                      << "," << format_double(s.min) << "," << format_double(s.max) << "\n";
        }
    }
    if (summary) {
        std::ostringstream ss;
        ss << "eval: " << ckpt.agent_kind << " on " << track_path << ", " << episodes
           << " episodes (seed " << seed << ")\n";
        for (const auto& s : eval_stats(outcome.episodes)) {
            ss << "  " << s.name << ": mean " << format_double(s.mean) << ", median "
               << format_double(s.med) << ", min " << format_double(s.min) << ", max "
               << format_double(s.max) << "\n";
        }
        *summary = ss.str();
    }
    return outcome;
}

namespace {

struct RunAggregates {
    std::vector<double> first_lap_episode;
    std::vector<double> final_on_track_fraction;
    std::vector<double> final_steer_delta;
};

RunAggregates aggregate_run(const std::string& run_dir) {
    const ExperimentConfig cfg = load_config_file(run_dir + "/config.resolved");
    RunAggregates agg;
    for (const auto seed : cfg.seeds) {
        const auto rows = read_metrics_csv(seed_dir_for(run_dir, seed) + "/metrics.csv");
        double first_lap = std::numeric_limits<double>::infinity();
        for (const auto& r : rows) {
            if (r.lap_completed) {
                first_lap = r.episode;
                break;
            }
        }
        agg.first_lap_episode.push_back(first_lap);
        const std::size_t tail =
            std::max<std::size_t>(1, rows.size() / 10); // final 10% of episodes
        double otf = 0.0, steer = 0.0;
        for (std::size_t i = rows.size() - std::min(tail, rows.size()); i < rows.size();
             ++i) {
            otf += rows[i].on_track_fraction;
            steer += rows[i].mean_abs_steer_delta;
        }
        const double denom = static_cast<double>(std::min(tail, rows.size()));
        agg.final_on_track_fraction.push_back(rows.empty() ? kNan : otf / denom);
        agg.final_steer_delta.push_back(rows.empty() ? kNan : steer / denom);
    }
    return agg;
}

} // namespace

std::vector<CompareRow> run_compare(const std::string& dir_a, const std::string& dir_b,
                                    const std::string& out_csv) {
    const RunAggregates a = aggregate_run(dir_a);
    const RunAggregates b = aggregate_run(dir_b);
    if (a.first_lap_episode.empty() || b.first_lap_episode.empty()) {
        throw ConfigError("compare: both runs need at least one seed with metrics");
    }
    std::vector<CompareRow> rows;
    const auto add = [&](const std::string& name, std::vector<double> xa,
                         std::vector<double> xb) {
        CompareRow row;
        row.metric = name;
        row.a_median = median(std::move(xa));
        row.b_median = median(std::move(xb));
        row.delta_a_minus_b = row.a_median - row.b_median;
        rows.push_back(row);
    };
    add("first_lap_episode", a.first_lap_episode, b.first_lap_episode);
    add("final_on_track_fraction", a.final_on_track_fraction, b.final_on_track_fraction);
    add("mean_abs_steer_delta", a.final_steer_delta, b.final_steer_delta);

    if (!out_csv.empty()) {
        std::ofstream out(out_csv);
        out << "metric,a_median,b_median,delta_a_minus_b\n";
        for (const auto& r : rows) {
            out << r.metric << "," << format_double(r.a_median) << ","
                << format_double(r.b_median) << "," << format_double(r.delta_a_minus_b)
                << "\n";
        }
    }
    return rows;
}

void run_demo(const ExperimentConfig& cfg, const std::string& checkpoint_path,
              const std::string& track_path, int max_steps, std::uint64_t seed,
              const std::string& out_csv) {
    const TrackSpec track = TrackSpec::load(track_path);
    Streams st = Streams::make(seed);

    ExperimentConfig run_cfg = cfg;
    std::unique_ptr<AgentDriver> driver;
    std::unique_ptr<Checkpoint> ckpt;
    if (checkpoint_path.empty()) {
        driver = std::make_unique<ExpertDriver>(
            ExpertConfig{cfg.k_steer, cfg.k_psi, cfg.k_speed, cfg.v_target});
    } else {
        ckpt = std::make_unique<Checkpoint>(Checkpoint::load(checkpoint_path));
        run_cfg = parse_config_text(ckpt->config_text);
        if (ckpt->agent_kind == "expert") {
            ExpertConfig expert;
            expert.k_steer = ckpt->meta_double("expert.k_steer", expert.k_steer);
            expert.k_psi = ckpt->meta_double("expert.k_psi", expert.k_psi);
            expert.k_speed = ckpt->meta_double("expert.k_speed", expert.k_speed);
            expert.v_target = ckpt->meta_double("expert.v_target", expert.v_target);
            driver = std::make_unique<ExpertDriver>(expert);
        } else {
            driver = make_driver(ckpt->agent_kind, run_cfg, st);
            driver->restore_from(*ckpt);
        }
    }

    Environment env(track, run_cfg.sim);
    std::ofstream out(out_csv);
    if (!out) throw Error("demo: cannot write '" + out_csv + "'");
    out << "t,s,d,psi,v,steer,accel,brake,reward\n";

    driver->begin_episode();
    auto [state, obs] = env.reset(st.env, st.flicker);
    (void)state;
    bool terminal = false;
    int step = 0;
    while (!terminal && step < max_steps) {
        const ContinuousAction action = driver->act_eval(obs, env.state(), track, st);
        const StepResult result = env.step(action, st.flicker);
        ++step;
        out << format_double(step * run_cfg.sim.dt) << "," << format_double(result.state.s)
            << "," << format_double(result.state.d) << "," << format_double(result.state.psi)
            << "," << format_double(result.state.v) << "," << format_double(action.steer)
            << "," << format_double(action.accel) << "," << format_double(action.brake) << ","
            << format_double(result.reward) << "\n";
        obs = result.obs;
        terminal = result.terminal;
    }
}

} // namespace lanesim
