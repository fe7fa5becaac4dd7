#include "lanesim/replay.hpp"

#include "lanesim/error.hpp"

namespace lanesim {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw Error("ReplayBuffer: capacity must be > 0");
    store_.reserve(capacity_);
}

void ReplayBuffer::push(Transition t) {
    if (store_.size() < capacity_) {
        store_.push_back(std::move(t));
    } else {
        store_[next_slot_] = std::move(t);
    }
    next_slot_ = (next_slot_ + 1) % capacity_;
    ++inserted_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= store_.size()) throw Error("ReplayBuffer: index out of range");
    if (store_.size() < capacity_) return store_[i];
    return store_[(next_slot_ + i) % capacity_];
}

const Transition& ReplayBuffer::sample_one(Rng& rng) const {
    if (store_.empty()) throw Error("ReplayBuffer: sampling from empty buffer");
    // Logical indexing, so a checkpoint-restored buffer (whose physical slots
    // are rotated) samples identically.
    return at(static_cast<std::size_t>(rng.uniform_int(static_cast<int>(store_.size()))));
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
    if (store_.size() < batch) {
        throw Error("ReplayBuffer: need " + std::to_string(batch) + " transitions, have " +
                    std::to_string(store_.size()));
    }
    std::vector<const Transition*> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(&sample_one(rng));
    return out;
}

void ReplayBuffer::clear() {
    store_.clear();
    next_slot_ = 0;
    inserted_ = 0;
}

EpisodeReplay::EpisodeReplay(std::size_t transition_capacity) : capacity_(transition_capacity) {
    if (capacity_ == 0) throw Error("EpisodeReplay: capacity must be > 0");
}

void EpisodeReplay::push_episode(std::vector<Transition> episode) {
    if (episode.empty()) return;
    total_ += episode.size();
    episodes_.push_back(std::move(episode));
    while (total_ > capacity_ && episodes_.size() > 1) {
        total_ -= episodes_.front().size();
        episodes_.pop_front();
    }
}

std::span<const Transition> EpisodeReplay::sample_fragment(std::size_t max_len, Rng& rng) const {
    if (total_ == 0) throw Error("EpisodeReplay: sampling from empty buffer");
    if (max_len == 0) throw Error("EpisodeReplay: fragment length must be > 0");
    std::size_t pick = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(total_)));
    for (const auto& ep : episodes_) {
        if (pick < ep.size()) {
            const std::size_t len = std::min(max_len, ep.size() - pick);
            return std::span<const Transition>(ep.data() + pick, len);
        }
        pick -= ep.size();
    }
    throw Error("EpisodeReplay: internal index error");
}

void EpisodeReplay::clear() {
    episodes_.clear();
    total_ = 0;
}

} // namespace lanesim
