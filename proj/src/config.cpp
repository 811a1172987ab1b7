#include "rdx/config.hpp"

#include <cstdio>
#include <fstream>

namespace rdx {

void to_json(json& j, const SolverConfig& c) {
    j = json{{"tolerance", c.tolerance},
             {"max_iterations", c.max_iterations},
             {"damping", c.damping}};
}

void from_json(const json& j, SolverConfig& c) {
    c.tolerance = j.value("tolerance", c.tolerance);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.damping = j.value("damping", c.damping);
}

void to_json(json& j, const HouseholdType& t) {
    j = json{{"alpha", t.alpha},   {"gamma", t.gamma}, {"beta", t.beta},
             {"income", t.income}, {"mass", t.mass},   {"theta", t.theta},
             {"mu0", t.mu0},       {"mu1", t.mu1},     {"sigma0", t.sigma0}};
}

void from_json(const json& j, HouseholdType& t) {
    t.alpha = j.at("alpha").get<double>();
    t.gamma = j.at("gamma").get<double>();
    t.beta = j.value("beta", 1.0 - t.alpha - t.gamma);
    t.income = j.at("income").get<double>();
    t.mass = j.at("mass").get<double>();
    t.theta = j.value("theta", 1.0);
    t.mu0 = j.value("mu0", 0.0);
    t.mu1 = j.value("mu1", 0.0);
    t.sigma0 = j.value("sigma0", 1.0);
}

void to_json(json& j, const DgpConfig& c) {
    j = json{{"n_jurisdictions", c.n_jurisdictions},
             {"types", c.types},
             {"chi", c.chi},
             {"eta", c.eta},
             {"lambda", c.lambda},
             {"amenity_mean", c.amenity_mean},
             {"amenity_sd", c.amenity_sd},
             {"productivity_mean", c.productivity_mean},
             {"productivity_sd", c.productivity_sd},
             {"dlogG_min", c.dlogG_min},
             {"dlogG_max", c.dlogG_max},
             {"n_referenda", c.n_referenda},
             {"n_replications", c.n_replications},
             {"master_seed", c.master_seed},
             {"population_scale", c.population_scale},
             {"baseline_tax_min", c.baseline_tax_min},
             {"baseline_tax_max", c.baseline_tax_max},
             {"anticipation", c.anticipation == Anticipation::Myopic ? "myopic" : "full-equilibrium"},
             {"solver", c.solver}};
}

void from_json(const json& j, DgpConfig& c) {
    c.n_jurisdictions = j.value("n_jurisdictions", c.n_jurisdictions);
    if (j.contains("types"))
        c.types = j.at("types").get<std::vector<HouseholdType>>();
    else if (c.types.empty())
        c.types = default_types();
    c.chi = j.value("chi", c.chi);
    c.eta = j.value("eta", c.eta);
    c.lambda = j.value("lambda", c.lambda);
    c.amenity_mean = j.value("amenity_mean", c.amenity_mean);
    c.amenity_sd = j.value("amenity_sd", c.amenity_sd);
    c.productivity_mean = j.value("productivity_mean", c.productivity_mean);
    c.productivity_sd = j.value("productivity_sd", c.productivity_sd);
    c.dlogG_min = j.value("dlogG_min", c.dlogG_min);
    c.dlogG_max = j.value("dlogG_max", c.dlogG_max);
    c.n_referenda = j.value("n_referenda", c.n_referenda);
    c.n_replications = j.value("n_replications", c.n_replications);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.population_scale = j.value("population_scale", c.population_scale);
    c.baseline_tax_min = j.value("baseline_tax_min", c.baseline_tax_min);
    c.baseline_tax_max = j.value("baseline_tax_max", c.baseline_tax_max);
    const std::string mode = j.value("anticipation", "myopic");
    if (mode == "myopic")
        c.anticipation = Anticipation::Myopic;
    else if (mode == "full-equilibrium")
        c.anticipation = Anticipation::FullEquilibrium;
    else
        throw ValidationError("dgp.anticipation: expected 'myopic' or 'full-equilibrium'");
    if (j.contains("solver")) c.solver = j.at("solver").get<SolverConfig>();
}

void to_json(json& j, const ExtrapConfig& c) {
    j = json{{"grid_min", c.grid_min},       {"grid_max", c.grid_max},
             {"grid_points", c.grid_points}, {"bin_width", c.bin_width},
             {"outer_draws", c.outer_draws}, {"inner_draws", c.inner_draws},
             {"max_records", c.max_records}};
}

void from_json(const json& j, ExtrapConfig& c) {
    c.grid_min = j.value("grid_min", c.grid_min);
    c.grid_max = j.value("grid_max", c.grid_max);
    c.grid_points = j.value("grid_points", c.grid_points);
    c.bin_width = j.value("bin_width", c.bin_width);
    c.outer_draws = j.value("outer_draws", c.outer_draws);
    c.inner_draws = j.value("inner_draws", c.inner_draws);
    c.max_records = j.value("max_records", c.max_records);
}

void DgpConfig::validate() const {
    if (n_jurisdictions < 1) throw ValidationError("dgp.n_jurisdictions: must be >= 1");
    if (types.empty()) throw ValidationError("dgp.types: at least one type required");
    if (!(dlogG_min > 0.0) || !(dlogG_max >= dlogG_min))
        throw ValidationError("dgp.dlogG bounds: need 0 < min <= max");
    if (n_referenda < 1) throw ValidationError("dgp.n_referenda: must be positive");
    if (n_replications < 1) throw ValidationError("dgp.n_replications: must be positive");
    if (!(population_scale > 0.0)) throw ValidationError("dgp.population_scale: must be positive");
    if (!(baseline_tax_min > 0.0) || !(baseline_tax_max >= baseline_tax_min))
        throw ValidationError("dgp.baseline_tax range: need 0 < min <= max");
    if (!(amenity_sd >= 0.0) || !(productivity_sd >= 0.0))
        throw ValidationError("dgp distribution sds must be nonnegative");
    if (!(eta > 0.0)) throw ValidationError("dgp.eta: must be positive");
    if (chi < 0.0 || chi > 1.0) throw ValidationError("dgp.chi: must lie in [0, 1]");
    solver.validate();
    for (const auto& t : types) {
        if (t.alpha <= 0.0 || t.gamma <= 0.0 || t.mass <= 0.0 || t.theta <= 0.0 ||
            t.sigma0 <= 0.0 || t.income <= 0.0)
            throw ValidationError("dgp.types: alpha, gamma, mass, theta, sigma0, income must be positive");
    }
}

void RunConfig::validate() const {
    dgp.validate();
    if (!seed_set) throw ValidationError("seed: required (no entropy-source defaults)");
    if (!(extrap.grid_min > 0.0) || !(extrap.grid_max > extrap.grid_min))
        throw ValidationError("extrap.grid bounds: need 0 < min < max");
    if (extrap.grid_points < 2) throw ValidationError("extrap.grid_points: must be >= 2");
    if (!(extrap.bin_width > 0.0)) throw ValidationError("extrap.bin_width: must be positive");
    if (extrap.outer_draws < 2 || extrap.inner_draws < 2)
        throw ValidationError("extrap bootstrap draws: need outer >= 2 and inner >= 2");
    if (!(turnout_dlogG_min > 0.0) || !(turnout_dlogG_max >= turnout_dlogG_min))
        throw ValidationError("turnout dlogG bounds: need 0 < min <= max");
    // Counting rule for identification: |J|(|K|+2) >= 2|K|+1.
    const int J = dgp.n_jurisdictions;
    const int K = static_cast<int>(dgp.types.size());
    if (J * (K + 2) < 2 * K + 1)
        throw ValidationError("identification counting rule violated: |J|(|K|+2) < 2|K|+1");
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("config parse error: ") + e.what());
    }
    RunConfig cfg;
    cfg.dgp.types = default_types();
    try {
        if (j.contains("dgp")) from_json(j.at("dgp"), cfg.dgp);
        if (j.contains("extrap")) from_json(j.at("extrap"), cfg.extrap);
        cfg.turnout_dlogG_min = j.value("turnout_dlogG_min", cfg.turnout_dlogG_min);
        cfg.turnout_dlogG_max = j.value("turnout_dlogG_max", cfg.turnout_dlogG_max);
        cfg.common_sigma0 = j.value("common_sigma0", cfg.common_sigma0);
        cfg.out_dir = j.value("out_dir", cfg.out_dir);
        cfg.threads = j.value("threads", cfg.threads);
        if (j.contains("seed")) {
            cfg.dgp.master_seed = j.at("seed").get<std::uint64_t>();
            cfg.seed_set = true;
        } else if (j.contains("dgp") && j.at("dgp").contains("master_seed")) {
            cfg.seed_set = true;
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config field error: ") + e.what());
    }
    return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["dgp"] = cfg.dgp;
    j["extrap"] = cfg.extrap;
    j["turnout_dlogG_min"] = cfg.turnout_dlogG_min;
    j["turnout_dlogG_max"] = cfg.turnout_dlogG_max;
    j["common_sigma0"] = cfg.common_sigma0;
    j["out_dir"] = cfg.out_dir;
    j["threads"] = cfg.threads;
    j["seed"] = cfg.dgp.master_seed;
    return j;
}

void apply_preset(RunConfig& cfg, const std::string& preset) {
    if (preset == "desk") {
        cfg.dgp.n_replications = 20;
        cfg.dgp.n_referenda = 2000;
        cfg.extrap.outer_draws = 20;
        cfg.extrap.inner_draws = 10;
        cfg.extrap.max_records = 200;
    } else if (preset == "paper") {
        cfg.dgp.n_replications = 100;
        cfg.dgp.n_referenda = 2000;
        cfg.extrap.outer_draws = 100;
        cfg.extrap.inner_draws = 20;
        cfg.extrap.max_records = 0;
    } else {
        throw ValidationError("unknown preset: " + preset + " (expected desk|paper)");
    }
}

std::string config_hash(const json& j) {
    const std::string dump = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace rdx
