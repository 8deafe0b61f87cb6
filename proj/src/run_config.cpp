#include "stcorr/run_config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace stcorr {

GridShape parse_grid(const std::string& text) {
    int t = 0, h = 0, w = 0;
    char x1 = 0, x2 = 0;
    std::istringstream is(text);
    if (!(is >> t >> x1 >> h >> x2 >> w) || x1 != 'x' || x2 != 'x' ||
        !is.eof())
        throw std::invalid_argument("bad grid '" + text + "', expected TxHxW");
    return GridShape(t, h, w);
}

std::vector<int> parse_ks(const std::string& text) {
    std::vector<int> ks;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ','))
        ks.push_back(std::stoi(item));
    if (ks.empty()) throw std::invalid_argument("empty k list");
    return ks;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config parse failure: " + std::string(e.what()));
    }

    RunConfig cfg;
    if (j.contains("grid")) cfg.grid = parse_grid(j.at("grid").get<std::string>());
    if (j.contains("setup")) cfg.setup = j.at("setup").get<std::string>();
    if (j.contains("matcher")) cfg.matcher = j.at("matcher").get<std::string>();
    if (j.contains("temperature")) cfg.temperature = j.at("temperature").get<double>();
    if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
    if (j.contains("ks")) cfg.ks = j.at("ks").get<std::vector<int>>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("min_shared")) cfg.min_shared = j.at("min_shared").get<int>();
    if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<int>();
    if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
    if (j.contains("normalize_features"))
        cfg.normalize_features = j.at("normalize_features").get<bool>();
    return cfg;
}

}  // namespace stcorr
