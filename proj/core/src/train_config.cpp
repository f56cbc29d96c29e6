#include "madf/train.hpp"

#include <fstream>

namespace madf {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

int parse_int(const std::string& v, const std::string& key) {
    try {
        return std::stoi(v);
    } catch (...) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        return std::stoull(v);
    } catch (...) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

}  // namespace

TrainConfig parse_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path + ": cannot open config");
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "preset") cfg.preset = value;
        else if (key == "batch") cfg.batch = parse_int(value, key);
        else if (key == "iterations") cfg.iterations = parse_int(value, key);
        else if (key == "seed") cfg.seed = parse_u64(value, key);
        else if (key == "schedule") cfg.schedule = value;
        else if (key == "pn_enabled") cfg.pn_enabled = parse_bool(value, key);
        else if (key == "refinements") cfg.refinements = parse_int(value, key);
        else if (key == "image_size") cfg.image_size = parse_int(value, key);
        else if (key == "dataset_size") cfg.dataset_size = parse_int(value, key);
        else if (key == "eval_interval") cfg.eval_interval = parse_int(value, key);
        else if (key == "checkpoint_interval") cfg.checkpoint_interval = parse_int(value, key);
        else if (key == "eval_masks") cfg.eval_masks = parse_int(value, key);
        else if (key == "checkpoint_path") cfg.checkpoint_path = value;
        else if (key == "log_path") cfg.log_path = value;
        else if (key == "resume_from") cfg.resume_from = value;
        else
            throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key +
                              "'");
    }
    cfg.validate();
    return cfg;
}

}  // namespace madf
