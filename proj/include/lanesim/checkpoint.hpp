#pragma once

#include "lanesim/nn.hpp"
#include "lanesim/qtable.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace lanesim {

// Versioned text container for a full training state: every tensor (network
// weights and flattened replay contents) as decimal floating point with 17
// significant digits, plus counters, named RNG stream states, sparse Q-table
// cells, and the resolved config the run used. load(save(x)) reproduces
// identical subsequent behavior.
struct Checkpoint {
    static constexpr int kVersion = 1;

    std::string agent_kind;
    std::int64_t env_steps = 0;
    std::int64_t episodes_done = 0;
    std::map<std::string, std::string> meta; // rng states, scalar extras
    ParamSet tensors;
    std::map<QTable::Key, double> qcells;
    std::string config_text;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path); // ConfigError on bad format/version

    void set_meta_double(const std::string& key, double v);
    double meta_double(const std::string& key, double fallback) const;
    void set_meta_i64(const std::string& key, std::int64_t v);
    std::int64_t meta_i64(const std::string& key, std::int64_t fallback) const;
};

} // namespace lanesim
