#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stcorr/tensor.hpp"

namespace stcorr {

// Config-file mirror of the CLI flags. Absent fields stay unset so that
// flag > config file > built-in default resolution works per field.
struct RunConfig {
    std::optional<GridShape> grid;
    std::optional<std::string> setup;
    std::optional<std::string> matcher;
    std::optional<double> temperature;
    std::optional<double> alpha;
    std::optional<std::vector<int>> ks;
    std::optional<std::uint64_t> seed;
    std::optional<int> min_shared;
    std::optional<int> jobs;
    std::optional<std::string> out;
    std::optional<bool> normalize_features;
};

// "TxHxW", e.g. "8x8x8"
GridShape parse_grid(const std::string& text);

// "1,3,5"
std::vector<int> parse_ks(const std::string& text);

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace stcorr
