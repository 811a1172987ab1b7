#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "rdx/dgp.hpp"
#include "rdx/equilibrium.hpp"

namespace rdx {

using nlohmann::json;

struct ParseError : DomainError {
    using DomainError::DomainError;
};
struct ValidationError : DomainError {
    using DomainError::DomainError;
};

void to_json(json& j, const SolverConfig& c);
void from_json(const json& j, SolverConfig& c);
void to_json(json& j, const HouseholdType& t);
void from_json(const json& j, HouseholdType& t);
void to_json(json& j, const DgpConfig& c);
void from_json(const json& j, DgpConfig& c);

/// Grid / binning / bootstrap settings for the extrapolation stage.
struct ExtrapConfig {
    double grid_min = 0.01;
    double grid_max = 0.40;
    int grid_points = 20;
    double bin_width = 0.005;
    int outer_draws = 100;
    int inner_draws = 20;
    int max_records = 0;  // 0 = all records
};
void to_json(json& j, const ExtrapConfig& c);
void from_json(const json& j, ExtrapConfig& c);

/// Top-level run configuration consumed by every CLI subcommand.
struct RunConfig {
    DgpConfig dgp;
    ExtrapConfig extrap;
    // Turnout-run overrides of the proposed-change bounds.
    double turnout_dlogG_min = 0.01;
    double turnout_dlogG_max = 0.40;
    bool common_sigma0 = true;
    std::string out_dir = "out";
    int threads = 0;  // 0 = hardware concurrency
    bool seed_set = false;

    void validate() const;
};

RunConfig load_run_config(const std::string& path);
json run_config_to_json(const RunConfig& cfg);

/// Apply the "desk" (CI-scale) or "paper" (full-scale) preset.
void apply_preset(RunConfig& cfg, const std::string& preset);

/// FNV-1a hash of the canonical JSON dump, hex-encoded; embedded in every
/// output file so artifacts can be traced back to their configuration.
std::string config_hash(const json& j);

}  // namespace rdx
