#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rdx/equilibrium.hpp"
#include "rdx/rng.hpp"
#include "rdx/types.hpp"
#include "rdx/voting.hpp"

namespace rdx {

/// Monte Carlo configuration for the simulated referendum process.
struct DgpConfig {
    int n_jurisdictions = 10;
    std::vector<HouseholdType> types;  // defaults to default_types()
    double chi = 1.0;
    double eta = 0.6;
    double lambda = 0.0;
    double amenity_mean = 0.0;
    double amenity_sd = 0.1;
    double productivity_mean = -1.2;
    double productivity_sd = 0.05;
    double dlogG_min = 0.095;  // RDD runs; turnout runs use [0.01, 0.40]
    double dlogG_max = 0.105;
    int n_referenda = 2000;
    int n_replications = 100;
    std::uint64_t master_seed = 0;
    double population_scale = 1000.0;  // households per unit mass
    // Per-district baseline tax rates pinning G_j = tau_j * P_j * H_j,
    // drawn uniformly from [baseline_tax_min, baseline_tax_max]. The range
    // is calibrated so that several districts sit near the approval cutoff
    // at dlogG near 0.1.
    double baseline_tax_min = 0.85;
    double baseline_tax_max = 1.30;
    Anticipation anticipation = Anticipation::Myopic;
    SolverConfig solver;

    void validate() const;
};

/// The four-type table used throughout the simulation study.
std::vector<HouseholdType> default_types();

/// One simulated ballot with both potential-outcome snapshots. The
/// treated state is solved even when the referendum fails, so oracle
/// checks can compare against the counterfactual arm.
///
/// `margin` is the realized approval margin computed from the binomial
/// voter draws; it determines approval and serves as the running
/// variable. `expected_margin` is the model margin from the expected
/// voter masses.
struct ReferendumRecord {
    int replication = 0;
    int referendum = 0;
    int district = 0;
    double dlogG = 0.0;
    double margin = 0.0;
    double expected_margin = 0.0;
    bool approved = false;
    Economy economy;            // drawn amenities/productivities + baseline G
    EquilibriumState pre;       // baseline equilibrium (the dlogG = 0 arm)
    EquilibriumState treated;   // equilibrium with G_j scaled by e^{dlogG}
    Eigen::VectorXd turnout_prob;    // T^k in the voting district
    std::vector<long> voters;        // observed voter counts per type
    std::vector<long> electorate;    // population counts per type

    const EquilibriumState& post() const { return approved ? treated : pre; }
};

struct Dataset {
    DgpConfig config;
    std::vector<ReferendumRecord> records;
    int dropped = 0;  // referenda discarded because a solve failed
};

namespace dgp {

/// Draw one economy: amenities ~ N(amenity_mean, amenity_sd^2),
/// productivities ~ N(productivity_mean, productivity_sd^2), the fixed
/// type table, and baseline spending from the configured baseline tax.
Economy draw_economy(const DgpConfig& config, Rng& rng);

/// Simulate one replication: draw the replication's economy (substream
/// {replication}) and its baseline equilibrium once, then hold
/// n_referenda independent votes (substreams {replication, referendum}).
/// Each vote picks a district uniformly, draws dlogG, draws binomial
/// voter counts at the model turnout probabilities, computes the realized
/// margin, and solves the counterfactual arm.
Dataset simulate_replication(const DgpConfig& config, int replication);

/// All replications concatenated; parallelized over referenda by the CLI.
Dataset simulate_dataset(const DgpConfig& config);

/// Columnar CSV with one row per referendum (wide per-district and
/// per-type snapshot columns) plus a JSON sidecar with config and seed.
void write_dataset_csv(const Dataset& data, const std::string& csv_path,
                       const std::string& sidecar_path, const std::string& config_hash);
Dataset read_dataset_csv(const std::string& csv_path, const std::string& sidecar_path);

}  // namespace dgp
}  // namespace rdx
