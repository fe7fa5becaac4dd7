#pragma once

#include <string>
#include <vector>

namespace lanesim {

struct TrackSegment {
    double length = 0.0;    // meters, > 0
    double curvature = 0.0; // 1/meters, signed (positive = left turn)
};

// Piecewise-constant-curvature centerline with borders at +-half_width.
// The simulation runs entirely in track-relative (s, d) coordinates, so a
// closed track only has to close in heading, which validate() enforces.
struct TrackSpec {
    std::vector<TrackSegment> segments;
    double half_width = 4.0;
    bool closed = false;

    double total_length() const;

    // Curvature at arc position s. Closed tracks wrap s; open tracks clamp it.
    double curvature_at(double s) const;

    // Throws ConfigError on violated invariants.
    void validate() const;

    static TrackSpec load(const std::string& path);
};

} // namespace lanesim
