#include "rdx/dgp.hpp"

#include <cmath>

#include "rdx/config.hpp"
#include "rdx/csv.hpp"
#include "rdx/parallel.hpp"

namespace rdx {
namespace dgp {

std::vector<HouseholdType> make_types() {
    const double alpha[4] = {0.55, 0.20, 0.15, 0.10};
    const double gamma[4] = {0.35, 0.30, 0.25, 0.20};
    const double income[4] = {0.45, 0.55, 0.55, 0.45};
    const double mu0[4] = {-3.0, -5.0, -7.0, -3.0};
    const double mu1[4] = {-1.0, -1.0, 0.0, 0.0};
    std::vector<HouseholdType> types(4);
    for (int k = 0; k < 4; ++k) {
        types[k].alpha = alpha[k];
        types[k].gamma = gamma[k];
        types[k].beta = 1.0 - alpha[k] - gamma[k];
        types[k].income = income[k];
        types[k].mass = 0.25;
        types[k].theta = 1.0;
        types[k].mu0 = mu0[k];
        types[k].mu1 = mu1[k];
        types[k].sigma0 = 3.0;
    }
    return types;
}

namespace {

// Baseline spending comes from the fixed-tax construction; the state it
// converged to doubles as the warm start (and, up to the residual check,
// the value) of the baseline equilibrium itself.
EquilibriumState draw_economy_impl(const DgpConfig& config, Rng& rng, Economy& econ) {
    econ.types = config.types.empty() ? default_types() : config.types;
    econ.eta = config.eta;
    econ.lambda = config.lambda;
    econ.chi = config.chi;
    econ.jurisdictions.resize(config.n_jurisdictions);
    for (auto& j : econ.jurisdictions) {
        j.amenity = rng.normal(config.amenity_mean, config.amenity_sd);
        j.spending = 1.0;  // placeholder until the baseline solve below
    }
    for (auto& j : econ.jurisdictions)
        j.productivity = rng.normal(config.productivity_mean, config.productivity_sd);
    Eigen::VectorXd tau(config.n_jurisdictions);
    for (int j = 0; j < config.n_jurisdictions; ++j)
        tau[j] = rng.uniform(config.baseline_tax_min, config.baseline_tax_max);

    auto baseline = equilibrium::solve_fixed_tax(econ, tau, config.solver);
    for (int j = 0; j < econ.n_jurisdictions(); ++j)
        econ.jurisdictions[j].spending = baseline.spending[j];
    return std::move(baseline.state);
}

}  // namespace

Economy draw_economy(const DgpConfig& config, Rng& rng) {
    Economy econ;
    draw_economy_impl(config, rng, econ);
    return econ;
}

namespace {

ReferendumRecord simulate_one(const DgpConfig& config, const Economy& econ,
                              const EquilibriumState& baseline, int replication,
                              int referendum) {
    Rng rng(config.master_seed,
            {static_cast<std::uint64_t>(replication), static_cast<std::uint64_t>(referendum)});

    ReferendumRecord rec;
    rec.replication = replication;
    rec.referendum = referendum;
    rec.economy = econ;
    rec.pre = baseline;

    const int nj = econ.n_jurisdictions();
    rec.district = std::min(static_cast<int>(rng.uniform() * nj), nj - 1);
    rec.dlogG = rng.uniform(config.dlogG_min, config.dlogG_max);

    const VoteOutcome vote = voting::referendum_outcome(
        econ, rec.pre, rec.district, rec.dlogG, config.anticipation, config.solver);
    rec.expected_margin = vote.margin;
    rec.turnout_prob = vote.turnout;

    // Observed turnout is binomial at the model probabilities; the ballot
    // is decided by the realized approval margin.
    const int nk = econ.n_types();
    rec.voters.resize(nk);
    rec.electorate.resize(nk);
    long total_voters = 0, approving_voters = 0;
    for (int k = 0; k < nk; ++k) {
        const long n = std::lround(rec.pre.pop(k, rec.district) * config.population_scale);
        rec.electorate[k] = n;
        rec.voters[k] = rng.binomial(n, vote.turnout[k]);
        total_voters += rec.voters[k];
        if (vote.approval[k] > 0.0) approving_voters += rec.voters[k];
    }
    if (total_voters == 0) throw ZeroTurnout();
    rec.margin = static_cast<double>(approving_voters) / total_voters - 0.5;
    rec.approved = rec.margin > 0.0;

    // The counterfactual arm is solved regardless of the outcome so the
    // record carries both potential outcomes.
    rec.treated = equilibrium::counterfactual_pair(econ, rec.district, rec.dlogG,
                                                   config.solver, &rec.pre)
                      .state1;
    return rec;
}

}  // namespace

Dataset simulate_replication(const DgpConfig& config, int replication) {
    config.validate();
    Dataset out;
    out.config = config;

    Rng econ_rng(config.master_seed, {static_cast<std::uint64_t>(replication)});
    Economy econ;
    const EquilibriumState start = draw_economy_impl(config, econ_rng, econ);
    const EquilibriumState baseline = equilibrium::solve(econ, config.solver, &start);

    out.records.reserve(config.n_referenda);
    for (int r = 0; r < config.n_referenda; ++r) {
        try {
            out.records.push_back(simulate_one(config, econ, baseline, replication, r));
        } catch (const DomainError&) {
            ++out.dropped;
        }
    }
    return out;
}

Dataset simulate_dataset(const DgpConfig& config) {
    config.validate();
    Dataset out;
    out.config = config;
    std::vector<Dataset> parts(config.n_replications);
    parallel_for(config.n_replications, 0,
                 [&](int rep) { parts[rep] = simulate_replication(config, rep); });
    for (auto& part : parts) {
        out.dropped += part.dropped;
        for (auto& rec : part.records) out.records.push_back(std::move(rec));
    }
    return out;
}

namespace {

std::vector<std::string> dataset_header(int nj, int nk) {
    std::vector<std::string> h = {"replication", "referendum",      "district", "dlogG",
                                  "margin",      "expected_margin", "approved"};
    auto per_district = [&](const std::string& stem) {
        for (int j = 0; j < nj; ++j) h.push_back(stem + "_" + std::to_string(j));
    };
    per_district("amenity");
    per_district("productivity");
    for (const char* arm : {"pre", "trt"}) {
        const std::string a(arm);
        per_district(a + "_P");
        per_district(a + "_tau");
        per_district(a + "_G");
        per_district(a + "_H");
        for (int k = 0; k < nk; ++k) per_district(a + "_N_k" + std::to_string(k));
    }
    for (int k = 0; k < nk; ++k) h.push_back("turnout_prob_k" + std::to_string(k));
    for (int k = 0; k < nk; ++k) h.push_back("voters_k" + std::to_string(k));
    for (int k = 0; k < nk; ++k) h.push_back("electorate_k" + std::to_string(k));
    return h;
}

}  // namespace

void write_dataset_csv(const Dataset& data, const std::string& csv_path,
                       const std::string& sidecar_path, const std::string& hash) {
    const int nj = data.config.n_jurisdictions;
    const int nk = static_cast<int>(data.config.types.size());
    csv::Table table(dataset_header(nj, nk));
    for (const auto& rec : data.records) {
        std::vector<double> row;
        row.reserve(table.n_cols());
        row.push_back(rec.replication);
        row.push_back(rec.referendum);
        row.push_back(rec.district);
        row.push_back(rec.dlogG);
        row.push_back(rec.margin);
        row.push_back(rec.expected_margin);
        row.push_back(rec.approved ? 1.0 : 0.0);
        for (int j = 0; j < nj; ++j) row.push_back(rec.economy.jurisdictions[j].amenity);
        for (int j = 0; j < nj; ++j) row.push_back(rec.economy.jurisdictions[j].productivity);
        for (const EquilibriumState* st : {&rec.pre, &rec.treated}) {
            for (int j = 0; j < nj; ++j) row.push_back(st->price[j]);
            for (int j = 0; j < nj; ++j) row.push_back(st->tax[j]);
            for (int j = 0; j < nj; ++j) row.push_back(st->spending[j]);
            for (int j = 0; j < nj; ++j) row.push_back(st->housing[j]);
            for (int k = 0; k < nk; ++k)
                for (int j = 0; j < nj; ++j) row.push_back(st->pop(k, j));
        }
        for (int k = 0; k < nk; ++k) row.push_back(rec.turnout_prob[k]);
        for (int k = 0; k < nk; ++k) row.push_back(static_cast<double>(rec.voters[k]));
        for (int k = 0; k < nk; ++k) row.push_back(static_cast<double>(rec.electorate[k]));
        table.add_row(row);
    }
    table.write(csv_path);

    json sidecar;
    sidecar["config"] = data.config;
    sidecar["seed"] = data.config.master_seed;
    sidecar["config_hash"] = hash;
    sidecar["dropped"] = data.dropped;
    sidecar["n_records"] = data.records.size();
    std::ofstream out(sidecar_path);
    out << sidecar.dump(2) << "\n";
}

Dataset read_dataset_csv(const std::string& csv_path, const std::string& sidecar_path) {
    Dataset data;
    {
        std::ifstream in(sidecar_path);
        if (!in) throw NonpositiveInput("cannot open sidecar: " + sidecar_path);
        json sidecar;
        in >> sidecar;
        from_json(sidecar.at("config"), data.config);
        data.dropped = sidecar.value("dropped", 0);
    }
    const int nj = data.config.n_jurisdictions;
    const int nk = static_cast<int>(data.config.types.size());
    const csv::Table table = csv::Table::read(csv_path);

    data.records.reserve(table.n_rows());
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        ReferendumRecord rec;
        rec.replication = static_cast<int>(table.at(r, "replication"));
        rec.referendum = static_cast<int>(table.at(r, "referendum"));
        rec.district = static_cast<int>(table.at(r, "district"));
        rec.dlogG = table.at(r, "dlogG");
        rec.margin = table.at(r, "margin");
        rec.expected_margin = table.at(r, "expected_margin");
        rec.approved = table.at(r, "approved") != 0.0;
        rec.economy.types = data.config.types;
        rec.economy.eta = data.config.eta;
        rec.economy.lambda = data.config.lambda;
        rec.economy.chi = data.config.chi;
        rec.economy.jurisdictions.resize(nj);
        for (int j = 0; j < nj; ++j) {
            rec.economy.jurisdictions[j].amenity = table.at(r, "amenity_" + std::to_string(j));
            rec.economy.jurisdictions[j].productivity =
                table.at(r, "productivity_" + std::to_string(j));
        }
        for (EquilibriumState* st : {&rec.pre, &rec.treated}) {
            const std::string a = (st == &rec.pre) ? "pre" : "trt";
            st->price.resize(nj);
            st->tax.resize(nj);
            st->spending.resize(nj);
            st->housing.resize(nj);
            st->pop.resize(nk, nj);
            st->pop_total.resize(nj);
            for (int j = 0; j < nj; ++j) {
                const std::string sj = "_" + std::to_string(j);
                st->price[j] = table.at(r, a + "_P" + sj);
                st->tax[j] = table.at(r, a + "_tau" + sj);
                st->spending[j] = table.at(r, a + "_G" + sj);
                st->housing[j] = table.at(r, a + "_H" + sj);
                for (int k = 0; k < nk; ++k)
                    st->pop(k, j) = table.at(r, a + "_N_k" + std::to_string(k) + sj);
                st->pop_total[j] = st->pop.col(j).sum();
            }
        }
        for (int j = 0; j < nj; ++j)
            rec.economy.jurisdictions[j].spending = rec.pre.spending[j];
        rec.turnout_prob.resize(nk);
        rec.voters.resize(nk);
        rec.electorate.resize(nk);
        for (int k = 0; k < nk; ++k) {
            const std::string sk = "_k" + std::to_string(k);
            rec.turnout_prob[k] = table.at(r, "turnout_prob" + sk);
            rec.voters[k] = static_cast<long>(table.at(r, "voters" + sk));
            rec.electorate[k] = static_cast<long>(table.at(r, "electorate" + sk));
        }
        data.records.push_back(std::move(rec));
    }
    return data;
}

}  // namespace dgp

std::vector<HouseholdType> default_types() { return dgp::make_types(); }

}  // namespace rdx
