#include "lanesim/sim.hpp"

#include "lanesim/error.hpp"

#include <algorithm>
#include <cmath>

namespace lanesim {

namespace {
constexpr double kPi = 3.141592653589793238462643383280;
constexpr double kTwoPi = 2.0 * kPi;

double clamp(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

// Tile centers are uniformly spaced with the interval endpoints included, so
// e.g. n=3 over [-1,1] yields {-1, 0, 1}.
double tile_center(int i, int n) {
    if (n == 1) return 0.0;
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
}

int nearest_tile(double x, int n) {
    if (n == 1) return 0;
    const double t = (clamp(x, -1.0, 1.0) + 1.0) * 0.5 * static_cast<double>(n - 1);
    return static_cast<int>(std::lround(t));
}
} // namespace

double wrap_angle(double a) {
    a = std::fmod(a, kTwoPi);
    if (a <= -kPi) a += kTwoPi;
    else if (a > kPi) a -= kTwoPi;
    return a;
}

ContinuousAction ContinuousAction::clamped() const {
    return ContinuousAction{clamp(steer, -1.0, 1.0), clamp(accel, 0.0, 1.0),
                            clamp(brake, 0.0, 1.0)};
}

ContinuousAction action_from_steer_throttle(double steer, double throttle_axis) {
    ContinuousAction a;
    a.steer = clamp(steer, -1.0, 1.0);
    const double t = clamp(throttle_axis, -1.0, 1.0);
    a.accel = std::max(t, 0.0);
    a.brake = std::max(-t, 0.0);
    return a;
}

double throttle_axis_of(const ContinuousAction& action) { return action.accel - action.brake; }

ContinuousAction ActionSpec::decode(int index) const {
    if (index < 0 || index >= count()) {
        throw Error("action index " + std::to_string(index) + " out of range [0, " +
                    std::to_string(count()) + ")");
    }
    const int si = index / n_throttle;
    const int ti = index % n_throttle;
    return action_from_steer_throttle(tile_center(si, n_steer), tile_center(ti, n_throttle));
}

int ActionSpec::encode(const ContinuousAction& action) const {
    const int si = nearest_tile(action.steer, n_steer);
    const int ti = nearest_tile(throttle_axis_of(action), n_throttle);
    return si * n_throttle + ti;
}

CarState integrate_step(const CarState& state, const ContinuousAction& action,
                        const TrackSpec& track, const SimConfig& cfg) {
    const ContinuousAction a = action.clamped();
    const double kappa = track.curvature_at(state.s);

    double v = state.v + cfg.dt * (cfg.max_accel * a.accel - cfg.max_brake * a.brake -
                                   cfg.drag * state.v * state.v);
    v = std::max(v, 0.0);

    // Singularity guard: the (1 - d*kappa) projection blows up when the car
    // reaches the curvature center; clamp the denominator away from zero.
    double denom = 1.0 - state.d * kappa;
    if (std::abs(state.d * kappa) >= 0.95) denom = (denom >= 0.0 ? 0.05 : -0.05);

    const double s_dot = v * std::cos(state.psi) / denom;
    const double psi_dot =
        (v / cfg.wheel_base) * std::tan(a.steer * cfg.max_steer_angle) - kappa * s_dot;
    const double d_dot = v * std::sin(state.psi);

    CarState next;
    next.s = state.s + cfg.dt * s_dot;
    next.d = state.d + cfg.dt * d_dot;
    next.psi = wrap_angle(state.psi + cfg.dt * psi_dot);
    next.v = v;
    next.step_count = state.step_count + 1;
    return next;
}

std::vector<double> rangefinder(const CarState& state, const TrackSpec& track,
                                const SimConfig& cfg, int n_rays) {
    if (n_rays < 1) throw Error("rangefinder: n_rays must be >= 1");
    std::vector<double> readings(static_cast<std::size_t>(n_rays), 0.0);
    const double hw = track.half_width;
    if (std::abs(state.d) > hw) return readings; // off track: sentinel zeros

    const double kappa = track.curvature_at(state.s);
    for (int i = 0; i < n_rays; ++i) {
        const double theta =
            (n_rays == 1) ? 0.0 : -kPi / 2.0 + kPi * static_cast<double>(i) / (n_rays - 1);
        const double phi = state.psi + theta; // ray angle vs centerline tangent
        double dist = cfg.range_max;
        if (std::abs(kappa) < 1e-12) {
            // Straight borders at lateral +-hw; the car sits at lateral d.
            const double lat = std::sin(phi);
            if (lat > 1e-12) dist = (hw - state.d) / lat;
            else if (lat < -1e-12) dist = (hw + state.d) / (-lat);
        } else {
            // Local frame: x forward, y left, centerline through the origin
            // with constant curvature. Borders are concentric circles around
            // (0, 1/kappa); the outer one always encloses the car, so some
            // border hit exists for every direction.
            const double cy = 1.0 / kappa;
            const double py = state.d - cy; // P - C
            const double uy = std::sin(phi);
            const double r_inner = std::abs(cy) - hw;
            const double r_outer = std::abs(cy) + hw;
            double best = cfg.range_max;
            for (double r : {r_inner, r_outer}) {
                const double b = uy * py; // u . (P - C), unit ray direction u
                const double c = py * py - r * r;
                const double disc = b * b - c;
                if (disc < 0.0) continue;
                const double sq = std::sqrt(disc);
                for (double t : {-b - sq, -b + sq}) {
                    if (t > 1e-9 && t < best) best = t;
                }
            }
            dist = best;
        }
        readings[static_cast<std::size_t>(i)] = clamp(dist, 0.0, cfg.range_max) / cfg.range_max;
    }
    return readings;
}

Observation observe(const CarState& state, const TrackSpec& track, const SimConfig& cfg,
                    Rng& flicker_rng) {
    Observation obs;
    obs.track_pos = state.d / track.half_width;
    obs.speed_x = state.v * std::cos(state.psi);
    if (cfg.n_rays > 0) obs.ranges = rangefinder(state, track, cfg, cfg.n_rays);
    obs.visible = true;
    if (cfg.flicker && flicker_rng.uniform() < cfg.p_flicker) {
        // Blank the exteroceptive channels; ego speed stays (proprioceptive).
        obs.visible = false;
        obs.track_pos = 0.0;
        std::fill(obs.ranges.begin(), obs.ranges.end(), 0.0);
    }
    return obs;
}

double reward(const CarState& next, const TrackSpec& track, const SimConfig& cfg,
              bool departed) {
    const double track_pos = next.d / track.half_width;
    double r = (next.v * std::cos(next.psi) - next.v * std::abs(track_pos)) / cfg.v_scale;
    if (departed) r -= cfg.off_track_penalty;
    return r;
}

Environment::Environment(TrackSpec track, SimConfig cfg)
    : track_(std::move(track)), cfg_(cfg) {
    track_.validate();
}

std::pair<CarState, Observation> Environment::reset(Rng& env_rng, Rng& flicker_rng) {
    state_ = CarState{};
    state_.d = env_rng.uniform(-0.1 * track_.half_width, 0.1 * track_.half_width);
    state_.v = cfg_.v_init;
    return {state_, observe(state_, track_, cfg_, flicker_rng)};
}

StepResult Environment::step(const ContinuousAction& action, Rng& flicker_rng) {
    state_ = integrate_step(state_, action, track_, cfg_);
    StepResult result;
    result.state = state_;
    result.departed = std::abs(state_.d) > track_.half_width;
    result.lap_completed = !result.departed && state_.s >= track_.total_length();
    result.terminal =
        result.departed || result.lap_completed || state_.step_count >= cfg_.max_steps;
    result.reward = reward(state_, track_, cfg_, result.departed);
    result.obs = observe(state_, track_, cfg_, flicker_rng);
    return result;
}

} // namespace lanesim
