#include "lanesim/checkpoint.hpp"

#include "lanesim/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace lanesim {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int count_lines(const std::string& text) {
    if (text.empty()) return 0;
    int n = 0;
    for (char c : text) {
        if (c == '\n') ++n;
    }
    if (text.back() != '\n') ++n;
    return n;
}

} // namespace

void Checkpoint::set_meta_double(const std::string& key, double v) { meta[key] = fmt17(v); }

double Checkpoint::meta_double(const std::string& key, double fallback) const {
    const auto it = meta.find(key);
    return it == meta.end() ? fallback : std::stod(it->second);
}

void Checkpoint::set_meta_i64(const std::string& key, std::int64_t v) {
    meta[key] = std::to_string(v);
}

std::int64_t Checkpoint::meta_i64(const std::string& key, std::int64_t fallback) const {
    const auto it = meta.find(key);
    return it == meta.end() ? fallback : std::stoll(it->second);
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("checkpoint: cannot write '" + path + "'");
    out << "lanesim-checkpoint " << kVersion << "\n";
    out << "agent " << agent_kind << "\n";
    out << "env_steps " << env_steps << "\n";
    out << "episodes " << episodes_done << "\n";
    for (const auto& [key, value] : meta) {
        out << "meta " << key << " " << value << "\n";
    }
    out << "config " << count_lines(config_text) << "\n";
    out << config_text;
    if (!config_text.empty() && config_text.back() != '\n') out << "\n";
    for (const auto& name : tensors.names()) {
        const Tensor& t = tensors.at(name);
        out << "tensor " << name << " " << t.shape.size();
        for (std::size_t d : t.shape) out << " " << d;
        out << "\n";
        for (std::size_t i = 0; i < t.size(); ++i) {
            out << fmt17(t.value[i]);
            out << (((i + 1) % 8 == 0 || i + 1 == t.size()) ? "\n" : " ");
        }
    }
    out << "qtable " << qcells.size() << "\n";
    for (const auto& [key, value] : qcells) {
        out << key.first << " " << key.second << " " << fmt17(value) << "\n";
    }
    out << "end\n";
    if (!out) throw Error("checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("checkpoint: cannot open '" + path + "'");
    std::string word;
    int version = -1;
    if (!(in >> word >> version) || word != "lanesim-checkpoint") {
        throw ConfigError("checkpoint: '" + path + "' is not a lanesim checkpoint");
    }
    if (version != kVersion) {
        throw ConfigError("checkpoint: version mismatch (file " + std::to_string(version) +
                          ", supported " + std::to_string(kVersion) + ")");
    }
    Checkpoint ckpt;
    while (in >> word) {
        if (word == "agent") {
            in >> ckpt.agent_kind;
        } else if (word == "env_steps") {
            in >> ckpt.env_steps;
        } else if (word == "episodes") {
            in >> ckpt.episodes_done;
        } else if (word == "meta") {
            std::string key;
            in >> key;
            std::string rest;
            std::getline(in, rest);
            const auto b = rest.find_first_not_of(" \t");
            ckpt.meta[key] = b == std::string::npos ? "" : rest.substr(b);
        } else if (word == "config") {
            int n = 0;
            in >> n;
            std::string line;
            std::getline(in, line); // rest of the count line
            std::string text;
            for (int i = 0; i < n; ++i) {
                if (!std::getline(in, line)) {
                    throw ConfigError("checkpoint: truncated config block");
                }
                text += line;
                text += "\n";
            }
            ckpt.config_text = text;
        } else if (word == "tensor") {
            std::string name;
            std::size_t ndim = 0;
            if (!(in >> name >> ndim)) throw ConfigError("checkpoint: bad tensor header");
            std::vector<std::size_t> shape(ndim);
            for (auto& d : shape) {
                if (!(in >> d)) throw ConfigError("checkpoint: bad tensor shape");
            }
            Tensor& t = ckpt.tensors.add(name, shape);
            for (std::size_t i = 0; i < t.size(); ++i) {
                if (!(in >> t.value[i])) {
                    throw ConfigError("checkpoint: truncated tensor '" + name + "'");
                }
            }
        } else if (word == "qtable") {
            std::size_t n = 0;
            in >> n;
            for (std::size_t i = 0; i < n; ++i) {
                std::uint64_t state = 0;
                int action = 0;
                double value = 0.0;
                if (!(in >> state >> action >> value)) {
                    throw ConfigError("checkpoint: truncated qtable");
                }
                ckpt.qcells[{state, action}] = value;
            }
        } else if (word == "end") {
            return ckpt;
        } else {
            throw ConfigError("checkpoint: unknown directive '" + word + "'");
        }
    }
    throw ConfigError("checkpoint: missing end marker in '" + path + "'");
}

} // namespace lanesim
