#pragma once

#include "lanesim/rng.hpp"
#include "lanesim/track.hpp"

#include <utility>
#include <vector>

namespace lanesim {

// Pose in track-relative coordinates.
struct CarState {
    double s = 0.0;   // arc length along the centerline, meters (cumulative, not wrapped)
    double d = 0.0;   // signed lateral offset, meters, positive = left
    double psi = 0.0; // heading error vs centerline tangent, radians, in (-pi, pi]
    double v = 0.0;   // forward speed, m/s, >= 0
    int step_count = 0;
};

struct Observation {
    double track_pos = 0.0; // d / half_width; |track_pos| > 1 iff off track
    double speed_x = 0.0;   // v * cos(psi)
    std::vector<double> ranges; // empty when the rangefinder is disabled
    bool visible = true;        // false when this frame is flicker-blanked
};

struct ContinuousAction {
    double steer = 0.0; // [-1, 1]
    double accel = 0.0; // [0, 1]
    double brake = 0.0; // [0, 1]

    ContinuousAction clamped() const;
};

// Uniform tiling of the continuous actuators. The throttle axis t in [-1, 1]
// folds brake (t < 0) and accel (t > 0) into one dimension.
struct ActionSpec {
    int n_steer = 5;
    int n_throttle = 3;

    int count() const { return n_steer * n_throttle; }
    ContinuousAction decode(int index) const; // throws Error if out of range
    int encode(const ContinuousAction& action) const; // nearest tile
};

// Combines throttle-axis value into the accel/brake pair.
ContinuousAction action_from_steer_throttle(double steer, double throttle_axis);
double throttle_axis_of(const ContinuousAction& action); // accel - brake

struct SimConfig {
    double wheel_base = 2.5;      // m
    double max_steer_angle = 0.35; // rad; steer command scales into [-max, max]
    double max_accel = 4.0;       // m/s^2
    double max_brake = 8.0;       // m/s^2
    double drag = 0.02;           // 1/m, quadratic drag coefficient
    double dt = 0.05;             // s
    double v_init = 5.0;          // m/s at reset
    double v_scale = 10.0;        // reward normalization
    double off_track_penalty = 10.0;
    int max_steps = 2000;
    int n_rays = 9;               // 0 disables the rangefinder
    double range_max = 20.0;      // m
    bool flicker = false;
    double p_flicker = 0.5;
};

// Pure transition of the track-frame kinematic bicycle over one dt
// (semi-implicit Euler: speed first, then pose with the new speed).
CarState integrate_step(const CarState& state, const ContinuousAction& action,
                        const TrackSpec& track, const SimConfig& cfg);

// Sensor model. Draws from flicker_rng only when cfg.flicker is set.
Observation observe(const CarState& state, const TrackSpec& track, const SimConfig& cfg,
                    Rng& flicker_rng);

// K ray readings, angles evenly spaced in [-pi/2, +pi/2] around the heading,
// normalized to [0, 1] by range_max. Off-track states read all zeros.
std::vector<double> rangefinder(const CarState& state, const TrackSpec& track,
                                const SimConfig& cfg, int n_rays);

// Shaped lane-keeping reward evaluated at the post-step state.
double reward(const CarState& next, const TrackSpec& track, const SimConfig& cfg,
              bool departed);

double wrap_angle(double a); // to (-pi, pi]

struct StepResult {
    CarState state;
    Observation obs;
    double reward = 0.0;
    bool terminal = false;
    bool departed = false;
    bool lap_completed = false;
};

class Environment {
  public:
    Environment(TrackSpec track, SimConfig cfg);

    std::pair<CarState, Observation> reset(Rng& env_rng, Rng& flicker_rng);
    StepResult step(const ContinuousAction& action, Rng& flicker_rng);

    const CarState& state() const { return state_; }
    const TrackSpec& track() const { return track_; }
    const SimConfig& config() const { return cfg_; }

  private:
    TrackSpec track_;
    SimConfig cfg_;
    CarState state_;
};

} // namespace lanesim
