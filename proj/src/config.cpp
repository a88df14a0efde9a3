#include "rcombat/config.hpp"

#include <fstream>
#include <sstream>

namespace rcombat {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_text(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                fail(ErrorCode::ConfigError,
                     "bad section header at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::ConfigError,
                 "expected key=value at line " + std::to_string(lineno));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        cfg.values_[key] = value;
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ConfigError, "cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        fail(ErrorCode::ConfigError, "key '" + key + "' is not a number");
    }
}

long KeyValueConfig::get(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stol(it->second);
    } catch (const std::exception&) {
        fail(ErrorCode::ConfigError, "key '" + key + "' is not an integer");
    }
}

std::vector<std::string> KeyValueConfig::get_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return split_commas(it->second);
}

RunConfig RunConfig::from_config(const KeyValueConfig& kv) {
    RunConfig rc;
    rc.pool_path = kv.get("paths.pool", "");
    rc.reference_path = kv.get("paths.reference", "");
    rc.out_dir = kv.get("paths.out", rc.out_dir.string());
    rc.model_path = kv.get("paths.model", "");

    rc.pool_hc = static_cast<std::size_t>(kv.get("pool.n_hc", (long)rc.pool_hc));
    rc.pool_per_profile =
        static_cast<std::size_t>(kv.get("pool.n_per_profile", (long)rc.pool_per_profile));
    rc.reference_size =
        static_cast<std::size_t>(kv.get("pool.reference_size", (long)rc.reference_size));

    {
        std::vector<std::string> def;
        for (double r : rc.ratios) def.push_back(std::to_string(r));
        rc.ratios.clear();
        for (const auto& s : kv.get_list("grid.ratios", def))
            rc.ratios.push_back(std::stod(s));
    }
    rc.sites_per_ratio =
        static_cast<std::size_t>(kv.get("grid.sites_per_ratio", (long)rc.sites_per_ratio));
    rc.site_size = static_cast<std::size_t>(kv.get("grid.site_size", (long)rc.site_size));
    rc.effect_ranges.gamma_scale =
        kv.get("grid.gamma_scale", rc.effect_ranges.gamma_scale);
    rc.effect_ranges.delta_min = kv.get("grid.delta_min", rc.effect_ranges.delta_min);
    rc.effect_ranges.delta_max = kv.get("grid.delta_max", rc.effect_ranges.delta_max);

    for (const auto& f :
         kv.get_list("filters.methods", {"none", "oracle-hc", "mlp"}))
        rc.filters.push_back(FilterSpec::parse(f));

    rc.network.dropout_rate = kv.get("mlp.dropout_rate", rc.network.dropout_rate);
    rc.network.batch_size =
        static_cast<int>(kv.get("mlp.batch_size", (long)rc.network.batch_size));
    rc.network.hc_penalty_weight =
        kv.get("mlp.hc_penalty_weight", rc.network.hc_penalty_weight);
    rc.network.learning_rate = kv.get("mlp.learning_rate", rc.network.learning_rate);
    rc.network.max_epochs =
        static_cast<int>(kv.get("mlp.max_epochs", (long)rc.network.max_epochs));
    rc.network.early_stop_patience = static_cast<int>(
        kv.get("mlp.early_stop_patience", (long)rc.network.early_stop_patience));
    {
        std::vector<std::string> def;
        for (int h : rc.network.hidden) def.push_back(std::to_string(h));
        rc.network.hidden.clear();
        for (const auto& s : kv.get_list("mlp.hidden", def))
            rc.network.hidden.push_back(std::stoi(s));
    }

    {
        std::vector<std::string> def;
        for (std::size_t s : rc.sweep_sizes) def.push_back(std::to_string(s));
        rc.sweep_sizes.clear();
        for (const auto& s : kv.get_list("sweep.sizes", def))
            rc.sweep_sizes.push_back(static_cast<std::size_t>(std::stol(s)));
    }
    {
        std::vector<std::string> def;
        for (double r : rc.sweep_ratios) def.push_back(std::to_string(r));
        rc.sweep_ratios.clear();
        for (const auto& s : kv.get_list("sweep.ratios", def))
            rc.sweep_ratios.push_back(std::stod(s));
    }
    rc.sweep_sites_per_cell = static_cast<std::size_t>(
        kv.get("sweep.sites_per_cell", (long)rc.sweep_sites_per_cell));

    rc.bootstrap.n_iterations =
        static_cast<int>(kv.get("bootstrap.iterations", (long)rc.bootstrap.n_iterations));
    rc.bootstrap.heldout_per_iter = static_cast<std::size_t>(
        kv.get("bootstrap.heldout_per_iter", (long)rc.bootstrap.heldout_per_iter));
    rc.bootstrap.sites_per_iter = static_cast<std::size_t>(
        kv.get("bootstrap.sites_per_iter", (long)rc.bootstrap.sites_per_iter));
    rc.bootstrap.site_size =
        static_cast<std::size_t>(kv.get("bootstrap.site_size", (long)rc.bootstrap.site_size));
    rc.bootstrap.ranges = rc.effect_ranges;
    rc.bootstrap.mlp = rc.network;
    // Bootstrap retrains the detector 30 times; cap epochs unless overridden.
    rc.bootstrap.mlp.max_epochs =
        static_cast<int>(kv.get("bootstrap.mlp_max_epochs", 60L));
    rc.bootstrap.mlp.early_stop_patience =
        static_cast<int>(kv.get("bootstrap.mlp_patience", 10L));

    rc.seed = static_cast<std::uint64_t>(kv.get("seed", (long)rc.seed));
    rc.network.seed = rc.seed;
    rc.bootstrap.seed = rc.seed;
    rc.threads = static_cast<int>(kv.get("threads", (long)rc.threads));
    rc.log_level = kv.get("log_level", rc.log_level);
    return rc;
}

std::string RunConfig::default_config_text() {
    RunConfig d;
    std::ostringstream os;
    os << "# robust-combat run configuration (defaults)\n";
    os << "seed = " << d.seed << "\n";
    os << "threads = " << d.threads << "\n";
    os << "log_level = " << d.log_level << "\n\n";
    os << "[paths]\n";
    os << "pool = \nreference = \nout = " << d.out_dir.string() << "\nmodel = \n\n";
    os << "[pool]\n";
    os << "n_hc = " << d.pool_hc << "\n";
    os << "n_per_profile = " << d.pool_per_profile << "\n";
    os << "reference_size = " << d.reference_size << "\n\n";
    os << "[grid]\n";
    os << "ratios = 0.03,0.10,0.30,0.50,0.70,0.80\n";
    os << "sites_per_ratio = " << d.sites_per_ratio << "\n";
    os << "site_size = " << d.site_size << "\n";
    os << "gamma_scale = " << d.effect_ranges.gamma_scale << "\n";
    os << "delta_min = " << d.effect_ranges.delta_min << "\n";
    os << "delta_max = " << d.effect_ranges.delta_max << "\n\n";
    os << "[filters]\n";
    os << "methods = none,oracle-hc,mlp\n\n";
    os << "[mlp]\n";
    os << "hidden = 256,128,64\n";
    os << "dropout_rate = " << d.network.dropout_rate << "\n";
    os << "batch_size = " << d.network.batch_size << "\n";
    os << "hc_penalty_weight = " << d.network.hc_penalty_weight << "\n";
    os << "learning_rate = " << d.network.learning_rate << "\n";
    os << "max_epochs = " << d.network.max_epochs << "\n";
    os << "early_stop_patience = " << d.network.early_stop_patience << "\n\n";
    os << "[sweep]\n";
    os << "sizes = 20,30,40,50,60\n";
    os << "ratios = 0.5,0.7,0.8\n";
    os << "sites_per_cell = " << d.sweep_sites_per_cell << "\n\n";
    os << "[bootstrap]\n";
    os << "iterations = " << d.bootstrap.n_iterations << "\n";
    os << "heldout_per_iter = " << d.bootstrap.heldout_per_iter << "\n";
    os << "sites_per_iter = " << d.bootstrap.sites_per_iter << "\n";
    os << "site_size = " << d.bootstrap.site_size << "\n";
    os << "mlp_max_epochs = 60\n";
    os << "mlp_patience = 10\n";
    return os.str();
}

std::string RunConfig::hash() const {
    std::ostringstream os;
    os << pool_path.string() << '|' << reference_path.string() << '|' << pool_hc << '|'
       << pool_per_profile << '|' << reference_size << '|';
    for (double r : ratios) os << r << ',';
    os << '|' << sites_per_ratio << '|' << site_size << '|'
       << effect_ranges.gamma_scale << '|' << effect_ranges.delta_min << '|'
       << effect_ranges.delta_max << '|';
    for (const auto& f : filters) os << f.to_string() << ',';
    os << '|' << network.dropout_rate << '|' << network.batch_size << '|'
       << network.hc_penalty_weight << '|' << network.learning_rate << '|'
       << network.max_epochs << '|' << network.early_stop_patience << '|';
    for (int h : network.hidden) os << h << ',';
    os << '|' << seed;
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : os.str()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream hex;
    hex << std::hex << h;
    return hex.str();
}

}  // namespace rcombat
