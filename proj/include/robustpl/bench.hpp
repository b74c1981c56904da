// SPDX-License-Identifier: Apache-2.0
//
// robustpl: outage-constrained robust power loading for the MU-MISO downlink
// ------------------------------------------------------------------------
//
// Seeded experiment sweeps over (sigma_e^2, trial, gamma, method), record
// aggregation and CSV import/export.

#ifndef ROBUSTPL_BENCH_HPP
#define ROBUSTPL_BENCH_HPP

#include "gaussian_quadratic.hpp"
#include "model.hpp"
#include "power_loading.hpp"
#include "types.hpp"
#include "zf_fast.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace robustpl
{

enum class Method
{
    PcsiGeneral,
    RciGeneral,
    ZfGeneral,
    ZfCoordDescent,
    ZfCoordUpdate
};

inline const char *to_string(Method m)
{
    switch (m)
    {
    case Method::PcsiGeneral: return "PCSI-General";
    case Method::RciGeneral: return "RCI-General";
    case Method::ZfGeneral: return "ZF-General";
    case Method::ZfCoordDescent: return "ZF-CoordDescent";
    case Method::ZfCoordUpdate: return "ZF-CoordUpdate";
    }
    return "Unknown";
}

inline Method method_from_string(const std::string &s)
{
    for (Method m : {Method::PcsiGeneral, Method::RciGeneral, Method::ZfGeneral, Method::ZfCoordDescent, Method::ZfCoordUpdate})
        if (s == to_string(m))
            return m;
    throw Error(ErrorCode::InvalidArgument, "unknown method '" + s + "'");
}

struct ExperimentConfig
{
    int n_tx = 3;
    int n_users = 3;
    double sigma2 = 0.01;
    double sigma2_bs = 0.01;
    double L_ut = 1.0;
    std::vector<double> P_ut;    // training powers; each gives one sigma_e^2
    std::vector<double> sigma_e2; // used directly when P_ut is empty
    std::vector<double> gamma_db{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    double epsilon = 0.05;
    int n_trials = 200;
    std::uint64_t seed = 1;
    std::vector<Method> methods{Method::PcsiGeneral, Method::RciGeneral, Method::ZfGeneral, Method::ZfCoordDescent, Method::ZfCoordUpdate};
    double delta_min = 1e-3;
    double quad_tol = 1e-8;
    int i_max = 50;
    double eta_multiple = -1.3;
    long mc_certify_samples = 0;

    // The error variances swept, in configuration order.
    std::vector<double> error_variances() const
    {
        if (P_ut.empty())
            return sigma_e2;
        std::vector<double> out;
        for (double p : P_ut)
            out.push_back(training_error_variance(sigma2_bs, L_ut, p));
        return out;
    }

    void validate() const
    {
        auto fail = [](const std::string &m) { throw Error(ErrorCode::InvalidArgument, m); };
        if (n_tx < 1 || n_users < 1)
            fail("n_tx and n_users must be positive");
        if (n_users > n_tx)
            fail("zero-forcing needs n_users <= n_tx");
        if (!(sigma2 > 0.0) || !(sigma2_bs > 0.0))
            fail("sigma2 and sigma2_bs must be positive");
        if (P_ut.empty() == sigma_e2.empty())
            fail("give exactly one of 'training' and 'sigma_e2'");
        for (double v : sigma_e2)
            if (!(v >= 0.0))
                fail("sigma_e2 entries must be nonnegative");
        for (double v : P_ut)
            if (!(v > 0.0))
                fail("P_ut entries must be positive");
        if (!P_ut.empty() && !(L_ut >= 1.0))
            fail("L_ut must be at least 1");
        if (gamma_db.empty())
            fail("gamma_db must not be empty");
        if (!(epsilon > 0.0 && epsilon < 1.0))
            fail("epsilon must lie in (0,1)");
        if (n_trials < 0)
            fail("n_trials must be nonnegative");
        if (methods.empty())
            fail("methods must not be empty");
        if (!(delta_min > 0.0) || !(quad_tol > 0.0) || i_max < 0 || mc_certify_samples < 0)
            fail("solver knobs out of range");
    }
};

inline ExperimentConfig config_from_json(const nlohmann::json &j)
{
    if (!j.is_object())
        throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
    static const std::set<std::string> known{"n_tx", "n_users", "sigma2", "sigma2_bs", "training", "sigma_e2", "gamma_db", "epsilon",
                                             "n_trials", "seed", "methods", "delta_min", "quad_tol", "i_max", "eta_multiple",
                                             "mc_certify_samples"};
    for (const auto &item : j.items())
        if (!known.count(item.key()))
            throw Error(ErrorCode::InvalidArgument, "unknown config key '" + item.key() + "'");

    ExperimentConfig c;
    try
    {
        auto get = [&](const char *key, auto &dst) {
            if (j.contains(key))
                j.at(key).get_to(dst);
        };
        get("n_tx", c.n_tx);
        get("n_users", c.n_users);
        get("sigma2", c.sigma2);
        get("sigma2_bs", c.sigma2_bs);
        get("gamma_db", c.gamma_db);
        get("epsilon", c.epsilon);
        get("n_trials", c.n_trials);
        get("seed", c.seed);
        get("delta_min", c.delta_min);
        get("quad_tol", c.quad_tol);
        get("i_max", c.i_max);
        get("eta_multiple", c.eta_multiple);
        get("mc_certify_samples", c.mc_certify_samples);
        if (j.contains("sigma_e2"))
        {
            const auto &v = j.at("sigma_e2");
            c.sigma_e2 = v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
        }
        if (j.contains("training"))
        {
            const auto &t = j.at("training");
            if (!t.is_object())
                throw Error(ErrorCode::InvalidArgument, "'training' must be an object");
            for (const auto &item : t.items())
                if (item.key() != "L_ut" && item.key() != "P_ut")
                    throw Error(ErrorCode::InvalidArgument, "unknown training key '" + item.key() + "'");
            if (t.contains("L_ut"))
                t.at("L_ut").get_to(c.L_ut);
            const auto &p = t.at("P_ut");
            c.P_ut = p.is_array() ? p.get<std::vector<double>>() : std::vector<double>{p.get<double>()};
        }
        if (j.contains("methods"))
        {
            c.methods.clear();
            for (const auto &m : j.at("methods"))
                c.methods.push_back(method_from_string(m.get<std::string>()));
        }
    }
    catch (const nlohmann::json::exception &e)
    {
        throw Error(ErrorCode::InvalidArgument, std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open config '" + path + "'");
    nlohmann::json j;
    try
    {
        in >> j;
    }
    catch (const nlohmann::json::parse_error &e)
    {
        throw Error(ErrorCode::InvalidArgument, "config '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

struct TrialRecord
{
    std::string method;
    double gamma_db = 0.0;
    double sigma_e2 = 0.0;
    int trial = 0;
    bool feasible_start = false;
    bool success = false;
    double total_power = 0.0;
    int cycles = 0;
    long bisection_steps = 0;
    long integral_evals = 0;
    double runtime_ms = 0.0;

    bool operator==(const TrialRecord &) const = default;
};

struct SweepOptions
{
    int threads = 1;
    long mc_certify_samples = -1; // < 0: take the value from the config
    bool timing = false;          // record wall-clock runtime (breaks byte-identical output)
};

namespace detail
{

struct MethodOutcome
{
    SolveReport report;
    BeamformerMatrix directions;
    bool feasible_start = false;
    bool ok = false; // solver produced powers worth certifying
};

inline MethodOutcome run_method(Method m, const ScenarioInstance &inst, const QoSSpec &qos, const ExperimentConfig &cfg)
{
    DescentConfig dc;
    dc.delta_min = cfg.delta_min;
    dc.quad_tol = cfg.quad_tol;
    MethodOutcome out;
    auto general = [&](const BeamformerMatrix &b) {
        out.directions = b;
        out.report = solve_general(inst, b, qos, dc);
        out.feasible_start = out.report.status != SolveStatus::InfeasibleStartNotFound;
        out.ok = out.feasible_start;
    };
    try
    {
        switch (m)
        {
        case Method::PcsiGeneral:
            general(build_pcsi_directions(inst.est_channels, qos, inst.noise_var));
            break;
        case Method::RciGeneral:
            general(build_rci(inst.est_channels, static_cast<double>(inst.n_users()) * cfg.sigma2));
            break;
        case Method::ZfGeneral:
            general(build_zf(inst.est_channels));
            break;
        case Method::ZfCoordDescent:
        case Method::ZfCoordUpdate:
        {
            const BeamformerMatrix b = build_zf(inst.est_channels);
            out.directions = b;
            try
            {
                if (m == Method::ZfCoordDescent)
                {
                    ZfDescentConfig zc;
                    static_cast<DescentConfig &>(zc) = dc;
                    zc.eta_multiple = cfg.eta_multiple;
                    out.report = solve_zf_coord_descent(inst, b, qos, zc);
                    out.feasible_start = out.report.status != SolveStatus::InfeasibleStartNotFound;
                    out.ok = out.feasible_start;
                }
                else
                {
                    ZfUpdateConfig uc;
                    uc.i_max = cfg.i_max;
                    uc.eta_multiple = cfg.eta_multiple;
                    uc.quad_tol = cfg.quad_tol;
                    out.report = solve_zf_coord_update(inst, b, qos, uc);
                    out.feasible_start = out.report.status == SolveStatus::Solved;
                    out.ok = out.feasible_start;
                }
            }
            catch (const Error &e)
            {
                if (e.code() != ErrorCode::ApproximationInapplicable)
                    throw;
                general(b);
            }
            break;
        }
        }
    }
    catch (const Error &)
    {
        // Singular channel or divergent direction solve: recorded as a failed trial.
        out = MethodOutcome{};
    }
    return out;
}

// Exact certification (and optional Monte Carlo) of the returned powers.
inline bool certify(const ScenarioInstance &inst, const BeamformerMatrix &b, const PowerAllocation &p, const QoSSpec &qos, double tol,
                    long mc_samples, std::uint64_t mc_seed)
{
    for (Eigen::Index k = 0; k < inst.n_users(); ++k)
    {
        const auto e = outage_probability(build_outage_form(inst, b, p, qos, k), tol);
        if (e.value < 1.0 - qos.epsilon(k))
            return false;
        if (mc_samples > 0)
        {
            const auto mc = mc_probability(inst, b, p, qos, k, mc_samples, derive_seed(mc_seed, static_cast<std::uint64_t>(k)));
            if (1.0 - mc.value > qos.epsilon(k) + 4.0 * mc.abs_error_bound)
                return false;
        }
    }
    return true;
}

} // namespace detail

// Builds the (true, estimated) channel pair for one trial; the draws depend only
// on (seed, trial), so every method, gamma and error level sees the same channels.
inline ScenarioInstance make_trial_instance(const ExperimentConfig &cfg, int trial, double sigma_e2)
{
    const auto t = static_cast<std::uint64_t>(trial);
    const CMatrix h = generate_rayleigh_channels(cfg.n_tx, cfg.n_users, derive_seed(cfg.seed, t, 0));
    const UplinkEstimate est = add_estimation_error(h, sigma_e2, derive_seed(cfg.seed, t, 1));
    return ScenarioInstance::make(h, est.est_channels, est.error_cov, RVector::Constant(cfg.n_users, cfg.sigma2));
}

// All records for one (error level, trial) pair.
inline std::vector<TrialRecord> run_trial(const ExperimentConfig &cfg, std::size_t sigma_index, int trial, const SweepOptions &opts = {})
{
    const double se2 = cfg.error_variances().at(sigma_index);
    const ScenarioInstance inst = make_trial_instance(cfg, trial, se2);
    const long mc = opts.mc_certify_samples >= 0 ? opts.mc_certify_samples : cfg.mc_certify_samples;
    std::vector<TrialRecord> out;
    for (std::size_t g = 0; g < cfg.gamma_db.size(); ++g)
    {
        const QoSSpec qos = QoSSpec::uniform_db(cfg.n_users, cfg.gamma_db[g], cfg.epsilon);
        for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
        {
            const Method m = cfg.methods[mi];
            const auto t0 = std::chrono::steady_clock::now();
            const auto res = detail::run_method(m, inst, qos, cfg);
            TrialRecord r;
            r.method = to_string(m);
            r.gamma_db = cfg.gamma_db[g];
            r.sigma_e2 = se2;
            r.trial = trial;
            r.feasible_start = res.feasible_start;
            r.total_power = res.report.total_power;
            r.cycles = res.report.cycles;
            r.bisection_steps = res.report.bisection_steps;
            r.integral_evals = res.report.integral_evals;
            if (res.ok)
            {
                const auto mc_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(trial), 2 + g * cfg.methods.size() + mi);
                r.success = detail::certify(inst, res.directions, res.report.powers, qos, cfg.quad_tol, mc, mc_seed);
            }
            if (opts.timing)
                r.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            out.push_back(std::move(r));
        }
    }
    return out;
}

// Runs every (error level, trial) work unit on a bounded pool. Records are
// ordered by (sigma_e2, gamma, method, trial) in configuration order.
inline std::vector<TrialRecord> run_sweep(const ExperimentConfig &cfg, const SweepOptions &opts = {})
{
    cfg.validate();
    const std::size_t n_sigma = cfg.error_variances().size();
    const std::size_t n_units = n_sigma * static_cast<std::size_t>(cfg.n_trials);
    std::vector<std::vector<TrialRecord>> results(n_units);
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::optional<std::string> failure;

    auto worker = [&] {
        for (std::size_t u = next++; u < n_units; u = next++)
        {
            try
            {
                results[u] = run_trial(cfg, u / static_cast<std::size_t>(cfg.n_trials), static_cast<int>(u % static_cast<std::size_t>(cfg.n_trials)), opts);
            }
            catch (const std::exception &e)
            {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!failure)
                    failure = e.what();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(std::max<std::size_t>(n_units, 1))));
    std::vector<std::thread> pool;
    for (int i = 1; i < n_threads; ++i)
        pool.emplace_back(worker);
    worker();
    for (auto &t : pool)
        t.join();
    if (failure)
        throw Error(ErrorCode::InvalidArgument, "sweep failed: " + *failure);

    const std::size_t n_gamma = cfg.gamma_db.size(), n_methods = cfg.methods.size();
    std::vector<TrialRecord> out;
    out.reserve(n_units * n_gamma * n_methods);
    for (std::size_t s = 0; s < n_sigma; ++s)
        for (std::size_t g = 0; g < n_gamma; ++g)
            for (std::size_t m = 0; m < n_methods; ++m)
                for (int t = 0; t < cfg.n_trials; ++t)
                    out.push_back(results[s * static_cast<std::size_t>(cfg.n_trials) + static_cast<std::size_t>(t)][g * n_methods + m]);
    return out;
}

// ------------------------------------------------------------------------
// Aggregation

struct SummaryRow
{
    std::string method;
    double gamma_db = 0.0;
    double sigma_e2 = 0.0;
    double success_pct = 0.0;
    double avg_power_common = 0.0; // NaN when no trial qualifies
    double median_cycles = 0.0;    // over trials with a feasible start; NaN if none
    double median_bisections = 0.0;
};

namespace detail
{

inline double median(std::vector<double> v)
{
    if (v.empty())
        return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return (n % 2) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace detail

// Per (method, gamma, sigma_e2) summary. With common_subset, average power is
// taken over the trials (per sigma_e2) where every method succeeded at every
// gamma; otherwise over each group's own successful trials.
inline std::vector<SummaryRow> aggregate(const std::vector<TrialRecord> &records, bool common_subset)
{
    if (records.empty())
        throw Error(ErrorCode::InvalidArgument, "no records to aggregate");

    // Group keys in first-appearance order.
    using Key = std::tuple<std::string, double, double>;
    std::vector<Key> order;
    std::map<Key, std::vector<const TrialRecord *>> groups;
    for (const auto &r : records)
    {
        Key key{r.method, r.gamma_db, r.sigma_e2};
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted)
            order.push_back(key);
        it->second.push_back(&r);
    }

    std::map<double, std::set<int>> common; // sigma_e2 -> trials successful everywhere
    if (common_subset)
    {
        std::map<double, std::set<int>> failed, seen;
        for (const auto &r : records)
        {
            seen[r.sigma_e2].insert(r.trial);
            if (!r.success)
                failed[r.sigma_e2].insert(r.trial);
        }
        for (const auto &[se2, trials] : seen)
        {
            auto &c = common[se2];
            for (int t : trials)
                if (!failed[se2].count(t))
                    c.insert(t);
            if (c.empty())
                throw Error(ErrorCode::EmptyIntersection, "no trial succeeded for every method at sigma_e2 = " + std::to_string(se2));
        }
    }

    std::vector<SummaryRow> out;
    for (const Key &key : order)
    {
        const auto &rows = groups.at(key);
        SummaryRow s;
        std::tie(s.method, s.gamma_db, s.sigma_e2) = key;
        double n_success = 0.0, power = 0.0, n_power = 0.0;
        std::vector<double> cycles, bisections;
        for (const TrialRecord *r : rows)
        {
            n_success += r->success ? 1.0 : 0.0;
            const bool use = common_subset ? common.at(s.sigma_e2).count(r->trial) > 0 : r->success;
            if (use)
            {
                power += r->total_power;
                n_power += 1.0;
            }
            if (r->feasible_start)
            {
                cycles.push_back(r->cycles);
                bisections.push_back(static_cast<double>(r->bisection_steps));
            }
        }
        s.success_pct = 100.0 * n_success / static_cast<double>(rows.size());
        s.avg_power_common = n_power > 0.0 ? power / n_power : std::numeric_limits<double>::quiet_NaN();
        s.median_cycles = detail::median(cycles);
        s.median_bisections = detail::median(bisections);
        out.push_back(std::move(s));
    }
    return out;
}

// ------------------------------------------------------------------------
// CSV

inline constexpr const char *kRecordHeader =
    "method,gamma_db,sigma_e2,trial,feasible_start,success,total_power,cycles,bisection_steps,integral_evals,runtime_ms";
inline constexpr const char *kSummaryHeader = "method,gamma_db,sigma_e2,success_pct,avg_power_common,median_cycles,median_bisections";

inline std::string format_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline void write_records_csv(std::ostream &os, const std::vector<TrialRecord> &records)
{
    os << kRecordHeader << '\n';
    for (const auto &r : records)
        os << r.method << ',' << format_double(r.gamma_db) << ',' << format_double(r.sigma_e2) << ',' << r.trial << ','
           << (r.feasible_start ? 1 : 0) << ',' << (r.success ? 1 : 0) << ',' << format_double(r.total_power) << ',' << r.cycles << ','
           << r.bisection_steps << ',' << r.integral_evals << ',' << format_double(r.runtime_ms) << '\n';
}

inline void write_summary_csv(std::ostream &os, const std::vector<SummaryRow> &rows)
{
    os << kSummaryHeader << '\n';
    for (const auto &s : rows)
        os << s.method << ',' << format_double(s.gamma_db) << ',' << format_double(s.sigma_e2) << ',' << format_double(s.success_pct)
           << ',' << format_double(s.avg_power_common) << ',' << format_double(s.median_cycles) << ','
           << format_double(s.median_bisections) << '\n';
}

namespace detail
{

template <class Writer>
void write_file(const std::string &path, Writer &&w)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
    w(os);
    os.flush();
    if (!os)
        throw Error(ErrorCode::Io, "write to '" + path + "' failed");
}

inline std::vector<std::string> split_csv_line(const std::string &line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

} // namespace detail

inline void export_records(const std::string &path, const std::vector<TrialRecord> &records)
{
    detail::write_file(path, [&](std::ostream &os) { write_records_csv(os, records); });
}

inline void export_summary(const std::string &path, const std::vector<SummaryRow> &rows)
{
    detail::write_file(path, [&](std::ostream &os) { write_summary_csv(os, rows); });
}

inline std::vector<TrialRecord> read_records_csv(std::istream &is, const std::string &source = "<stream>")
{
    std::string line;
    if (!std::getline(is, line) || line != kRecordHeader)
        throw Error(ErrorCode::Io, source + ": missing or unexpected record header");
    std::vector<TrialRecord> out;
    int line_no = 1;
    while (std::getline(is, line))
    {
        ++line_no;
        if (line.empty())
            continue;
        const auto c = detail::split_csv_line(line);
        if (c.size() != 11)
            throw Error(ErrorCode::Io, source + ":" + std::to_string(line_no) + ": expected 11 fields");
        try
        {
            TrialRecord r;
            r.method = c[0];
            r.gamma_db = std::stod(c[1]);
            r.sigma_e2 = std::stod(c[2]);
            r.trial = std::stoi(c[3]);
            r.feasible_start = c[4] == "1";
            r.success = c[5] == "1";
            r.total_power = std::stod(c[6]);
            r.cycles = std::stoi(c[7]);
            r.bisection_steps = std::stol(c[8]);
            r.integral_evals = std::stol(c[9]);
            r.runtime_ms = std::stod(c[10]);
            out.push_back(std::move(r));
        }
        catch (const std::logic_error &)
        {
            throw Error(ErrorCode::Io, source + ":" + std::to_string(line_no) + ": malformed number");
        }
    }
    return out;
}

inline std::vector<TrialRecord> import_records(const std::string &path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error(ErrorCode::Io, "cannot open '" + path + "'");
    return read_records_csv(is, path);
}

} // namespace robustpl

#endif
