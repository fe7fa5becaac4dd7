#pragma once

#include "lanesim/rng.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

namespace lanesim {

// One environment interaction, stored as the feature vectors the agent saw.
struct Transition {
    std::vector<double> obs;
    std::vector<double> next_obs;
    int action = 0;                              // discrete action index
    std::array<double, 2> action_cont{0.0, 0.0}; // (steer, throttle axis)
    double reward = 0.0;
    bool terminal = false;
    int step_count = 0; // step index within its episode
};

// Fixed-capacity ring with strictly FIFO eviction and uniform sampling with
// replacement.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return store_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t inserted() const { return inserted_; }

    // i = 0 is the oldest retained transition.
    const Transition& at(std::size_t i) const;

    const Transition& sample_one(Rng& rng) const; // throws Error if empty
    // Throws Error if size() < batch. Pointers stay valid until the next push.
    std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

    void clear();

  private:
    std::vector<Transition> store_;
    std::size_t capacity_;
    std::size_t next_slot_ = 0;
    std::uint64_t inserted_ = 0;
};

// Episode-granular storage for recurrent agents: fragments must be contiguous
// in time, so whole episodes are kept and evicted FIFO.
class EpisodeReplay {
  public:
    explicit EpisodeReplay(std::size_t transition_capacity);

    void push_episode(std::vector<Transition> episode);
    std::size_t episode_count() const { return episodes_.size(); }
    std::size_t transition_count() const { return total_; }
    const std::vector<Transition>& episode(std::size_t i) const { return episodes_[i]; }

    // Contiguous fragment of at most max_len transitions; the start index is
    // uniform over all stored transitions, so long episodes are sampled
    // proportionally. Throws Error when empty.
    std::span<const Transition> sample_fragment(std::size_t max_len, Rng& rng) const;

    void clear();

  private:
    std::deque<std::vector<Transition>> episodes_;
    std::size_t total_ = 0;
    std::size_t capacity_;
};

} // namespace lanesim
