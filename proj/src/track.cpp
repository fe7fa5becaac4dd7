#include "lanesim/track.hpp"

#include "lanesim/error.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace lanesim {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

double TrackSpec::total_length() const {
    double total = 0.0;
    for (const auto& seg : segments) total += seg.length;
    return total;
}

double TrackSpec::curvature_at(double s) const {
    const double total = total_length();
    if (closed) {
        s = std::fmod(s, total);
        if (s < 0.0) s += total;
    } else {
        if (s < 0.0) s = 0.0;
        if (s >= total) s = total; // falls through to the last segment
    }
    double acc = 0.0;
    for (const auto& seg : segments) {
        acc += seg.length;
        if (s < acc) return seg.curvature;
    }
    return segments.back().curvature;
}

void TrackSpec::validate() const {
    if (segments.empty()) throw ConfigError("track: no segments");
    if (!(half_width > 0.0)) throw ConfigError("track: half_width must be > 0");
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (!(segments[i].length > 0.0)) {
            throw ConfigError("track: segment " + std::to_string(i) + " length must be > 0");
        }
    }
    if (closed) {
        double turn = 0.0;
        for (const auto& seg : segments) turn += seg.length * seg.curvature;
        const double rem = std::remainder(turn, kTwoPi);
        if (std::abs(rem) > 1e-9) {
            throw ConfigError("track: closed track heading change is not a multiple of 2*pi "
                              "(residual " + std::to_string(rem) + " rad)");
        }
    }
}

TrackSpec TrackSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("track: cannot open '" + path + "'");
    TrackSpec track;
    track.half_width = 0.0; // must be provided by the file
    std::string line;
    int lineno = 0;
    bool have_half_width = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string word;
        if (!(ss >> word)) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        if (word == "half_width") {
            if (!(ss >> track.half_width)) throw ConfigError(where + ": bad half_width");
            have_half_width = true;
        } else if (word == "closed") {
            int flag = 0;
            if (!(ss >> flag) || (flag != 0 && flag != 1)) {
                throw ConfigError(where + ": closed must be 0 or 1");
            }
            track.closed = flag == 1;
        } else if (word == "segment") {
            TrackSegment seg;
            if (!(ss >> seg.length >> seg.curvature)) {
                throw ConfigError(where + ": segment needs <length> <curvature>");
            }
            track.segments.push_back(seg);
        } else {
            throw ConfigError(where + ": unknown directive '" + word + "'");
        }
        std::string extra;
        if (ss >> extra) throw ConfigError(where + ": trailing token '" + extra + "'");
    }
    if (!have_half_width) throw ConfigError(path + ": missing half_width");
    track.validate();
    return track;
}

} // namespace lanesim
