// Acceptance suite: runs every headline criterion at its pinned tolerance and
// prints one PASS/FAIL line per criterion. Exit status is the failure count.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hrmsm/common.hpp"
#include "hrmsm/estimator.hpp"
#include "hrmsm/mr.hpp"
#include "hrmsm/rng.hpp"
#include "hrmsm/simulate.hpp"

using namespace hrmsm;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

const ReplicateSummary& find(const ReplicateReport& report, const std::string& contrast,
                             const std::string& vcov) {
    for (const auto& s : report.summaries)
        if (s.contrast == contrast && s.vcov == vcov) return s;
    throw std::runtime_error("missing summary " + contrast + "/" + vcov);
}

// ---- 1. Closed-form truth recovery ------------------------------------
void criterion1(int threads) {
    auto start = std::chrono::steady_clock::now();
    ReplicateSpec spec;
    spec.scenario.n = 100;
    spec.scenario.T = 50;
    spec.scenario.seed = 101;
    spec.reps = 1000;
    spec.vcov_names = {"sandwich"};
    spec.threads = threads;
    ReplicateReport rep = run_replicates(spec);
    TruthReport truth = true_beta(spec.scenario.closed_loop.alpha);

    double rel0 = std::abs(find(rep, "beta0", "sandwich").mean_estimate - truth.beta[0]) /
                  truth.beta[0];
    double rel1 = std::abs(find(rep, "beta1", "sandwich").mean_estimate - truth.beta[1]) /
                  truth.beta[1];
    double abs2 = std::abs(find(rep, "beta2", "sandwich").mean_estimate - truth.beta[2]);
    double abs3 = std::abs(find(rep, "beta3", "sandwich").mean_estimate - truth.beta[3]);
    double secs = elapsed_s(start);
    bool pass = rel0 < 0.01 && rel1 < 0.01 && abs2 < 0.01 && abs3 < 0.01 &&
                rep.reps_failed == 0 && secs < 300.0;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "truth recovery (n=100, T=50, 1000 reps): |rel| b0=%.4f b1=%.4f, "
                  "|abs| b2=%.4f b3=%.4f, %.1fs",
                  rel0, rel1, abs2, abs3, secs);
    report(1, pass, buf);
}

// ---- 2. Coverage grid ---------------------------------------------------
void criterion2(int threads) {
    const std::vector<std::string> contrasts = {"blip", "dissipation", "dose"};
    const std::vector<std::string> vcovs = {"sandwich", "CR1", "CR2", "CR3"};

    ReplicateSpec spec;
    spec.scenario.n = 100;
    spec.scenario.T = 500;
    spec.scenario.seed = 210;
    spec.reps = 1000;
    spec.vcov_names = vcovs;
    spec.threads = threads;
    TruthReport truth = true_beta(spec.scenario.closed_loop.alpha);
    spec.contrasts = default_contrasts(truth);
    spec.contrasts.resize(3);  // blip, dissipation, dose
    ReplicateReport large = run_replicates(spec);

    bool pass = large.reps_failed == 0;
    std::string detail = "coverage (n=100, T=500):";
    for (const auto& c : contrasts) {
        for (const auto& v : vcovs) {
            double cov = find(large, c, v).coverage;
            if (cov < 0.935 || cov > 0.965) pass = false;
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), " %s=%.3f..%.3f", c.c_str(),
                      find(large, c, "sandwich").coverage, find(large, c, "CR3").coverage);
        detail += buf;
    }

    spec.scenario.n = 6;
    spec.scenario.T = 10;
    spec.scenario.seed = 203;
    spec.vcov_names = {"sandwich", "CR3"};
    ReplicateReport tiny = run_replicates(spec);
    double mean_cr3 = 0.0, mean_sand = 0.0;
    for (const auto& c : contrasts) {
        mean_cr3 += find(tiny, c, "CR3").coverage / 3.0;
        mean_sand += find(tiny, c, "sandwich").coverage / 3.0;
    }
    if (!(mean_cr3 > mean_sand)) pass = false;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "; small-sample (n=6, T=10): CR3=%.3f > sandwich=%.3f (%d fail)",
                  mean_cr3, mean_sand, tiny.reps_failed);
    detail += buf;
    report(2, pass, detail);
}

// ---- 3. Sharp-null preservation ----------------------------------------
void criterion3() {
    // All treatment->outcome paths severed: a2 = a4 = 0 and, because the
    // lagged opportunity operates on the outcome through X_t as well, a3 = 0.
    SimScenario scenario;
    scenario.n = 2000;
    scenario.T = 50;
    scenario.seed = 303;
    scenario.closed_loop.alpha = {0.25, 0.0, 0.0, 0.0};
    Panel panel = simulate_panel(scenario);
    WorkingModel model = make_saturated(2);
    ExpandedTable table = expand_panel(panel, enumerate_regimes(2), {});
    DesignMatrix design = build_design(table, model);
    FitResult fit = solve_beta(design, model, {});

    double worst = 0.0;
    for (int r1 = 0; r1 < 4; ++r1)
        for (int r2 = r1 + 1; r2 < 4; ++r2) {
            Eigen::VectorXd c = regime_design_vector(model, table, r1, 2) -
                                regime_design_vector(model, table, r2, 2);
            Contrast w = wald(fit, c);
            double z = w.se > 0 ? std::abs(w.estimate / w.se) : 0.0;
            worst = std::max(worst, z);
        }
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "sharp null (alpha2=alpha3=alpha4=0, n=2000): max pairwise |z| = %.2f <= 4",
                  worst);
    report(3, worst <= 4.0, buf);
}

// ---- 4. Treatment-confounder feedback demonstration ---------------------
void criterion4() {
    SimScenario scenario;
    scenario.kind = SimScenario::Kind::feedback_cancel;
    scenario.n = 100;
    scenario.T = 500;
    scenario.seed = 404;
    Panel panel = simulate_panel(scenario);

    std::vector<double> means[2];
    for (const auto& s : panel.subjects()) {
        double sum = 0.0;
        for (const auto& r : s.records) sum += r.outcome;
        means[s.baseline[0] == 1.0 ? 1 : 0].push_back(sum / s.records.size());
    }
    auto mean_se = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= v.size();
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::make_pair(m, std::sqrt(ss / (v.size() - 1.0) / v.size()));
    };
    auto [m1, se1] = mean_se(means[1]);
    auto [m0, se0] = mean_se(means[0]);
    double z_macro = (m1 - m0) / std::sqrt(se1 * se1 + se0 * se0);

    WorkingModel model = make_saturated(2);
    auto blip_z = [&](int g) {
        Panel sub = panel.subset_by_baseline("G", g);
        ExpandedTable table = expand_panel(sub, enumerate_regimes(2), {});
        FitResult fit = solve_beta(build_design(table, model), model, {});
        return fit.beta[2] / std::sqrt(fit.vcov.at("sandwich")(2, 2));
    };
    double z_active = blip_z(1);
    double z_control = blip_z(0);

    bool pass = std::abs(z_macro) < 3.0 && z_active > 4.0 && std::abs(z_control) <= 3.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "feedback cancellation: macro |z|=%.2f < 3, active blip z=%.1f > 4, "
                  "control blip |z|=%.2f <= 3",
                  std::abs(z_macro), z_active, std::abs(z_control));
    report(4, pass, buf);
}

// ---- 5. Multiply-robust double robustness -------------------------------
void criterion5(int threads) {
    auto run_mr = [&](PropensityMode mode, bool zero_b, std::uint64_t seed) {
        ReplicateSpec spec;
        spec.scenario.n = 1000;
        spec.scenario.T = 50;
        spec.scenario.seed = seed;
        spec.reps = 200;
        spec.estimator = ReplicateSpec::Estimator::mr;
        spec.mr.nuisances.propensity = mode;
        spec.mr.nuisances.constant_pi = 0.5;
        spec.mr.nuisances.zero_outcome_model = zero_b;
        spec.vcov_names = {"sandwich"};
        spec.threads = threads;
        ReplicateReport rep = run_replicates(spec);
        double worst = 0.0;
        for (const auto& name : {"beta0", "beta1", "beta2", "beta3"})
            worst = std::max(worst, std::abs(find(rep, name, "sandwich").bias));
        return std::make_pair(worst, rep.reps_failed);
    };

    auto [bias_pi, fail1] = run_mr(PropensityMode::known, true, 505);
    auto [bias_b, fail2] = run_mr(PropensityMode::constant, false, 506);
    auto [bias_wrong, fail3] = run_mr(PropensityMode::constant, true, 507);

    bool pass = bias_pi < 0.02 && bias_b < 0.02 && bias_wrong > 0.05 &&
                fail1 + fail2 + fail3 == 0;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "double robustness (n=1000, 200 reps): correct-pi/zero-b max|rel|=%.4f < 0.02, "
                  "correct-b/wrong-pi max|rel|=%.4f < 0.02, doubly-wrong max|rel|=%.3f > 0.05",
                  bias_pi, bias_b, bias_wrong);
    report(5, pass, buf);
}

// ---- 6. Identification oracle -------------------------------------------
void criterion6() {
    ClosedLoopParams params;
    RegimeSet regimes = enumerate_regimes(2);

    SimScenario scenario;
    scenario.n = 200000;
    scenario.T = 2;
    scenario.seed = 606;
    Panel panel = simulate_panel(scenario);
    WorkingModel model = make_saturated(2);
    ExpandedTable table = expand_panel(panel, enumerate_regimes(2), {});
    SolveOptions opts;
    opts.vcov_names = {"sandwich"};
    FitResult fit = solve_beta(build_design(table, model), model, opts);

    bool pass = true;
    std::string detail = "forced-regime oracle vs IPW fit:";
    for (std::size_t r = 0; r < regimes.sequences.size(); ++r) {
        MonteCarloMean mc = forced_regime_mean(params, regimes.sequences[r], 1000000, 707);
        Eigen::VectorXd x = regime_design_vector(model, table, static_cast<std::int32_t>(r), 2);
        Contrast w = wald(fit, x);
        double z = std::abs(mc.mean - w.estimate) / std::sqrt(mc.se * mc.se + w.se * w.se);
        if (z >= 3.0) pass = false;
        char buf[48];
        std::snprintf(buf, sizeof(buf), " %s:z=%.2f", regimes.sequences[r].label().c_str(), z);
        detail += buf;
    }
    report(6, pass, detail + " (all < 3)");
}

// ---- 7. DGP-free property suite ------------------------------------------
void criterion7() {
    bool pass = true;
    std::string detail;

    // Gradient vs central finite differences, 1e-6 relative in vector norm.
    {
        Rng rng(717, 1);
        double worst = 0.0;
        for (Link link : {Link::identity, Link::logit, Link::log}) {
            for (int repdraw = 0; repdraw < 100; ++repdraw) {
                Eigen::VectorXd x(3), beta(3);
                for (int k = 0; k < 3; ++k) {
                    x[k] = rng.normal();
                    beta[k] = 0.5 * rng.normal();
                }
                LinkEval le = eval_link(link, x.dot(beta));
                Eigen::VectorXd grad = le.dmean * x;
                Eigen::VectorXd fd(3);
                double h = 1e-6;
                for (int k = 0; k < 3; ++k) {
                    Eigen::VectorXd bp = beta, bm = beta;
                    bp[k] += h;
                    bm[k] -= h;
                    fd[k] = (eval_link(link, x.dot(bp)).mean -
                             eval_link(link, x.dot(bm)).mean) /
                            (2.0 * h);
                }
                if (grad.norm() > 0) worst = std::max(worst, (fd - grad).norm() / grad.norm());
            }
        }
        if (worst >= 1e-6) pass = false;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "gradient-FD rel=%.1e;", worst);
        detail += buf;
    }

    // B_hat vs the numeric Jacobian of the averaged estimating function.
    {
        SimScenario scenario;
        scenario.n = 80;
        scenario.T = 10;
        scenario.seed = 718;
        Panel panel = simulate_panel(scenario);
        WorkingModel model = make_saturated(2, Link::logit);
        ExpandedTable table = expand_panel(panel, enumerate_regimes(2), {});
        for (auto& row : table.rows) row.outcome = row.outcome > 1.5 ? 1.0 : 0.0;
        DesignMatrix design = build_design(table, model);
        FitResult fit = solve_beta(design, model, {});
        Eigen::MatrixXd numeric(4, 4);
        double h = 1e-6;
        for (int j = 0; j < 4; ++j) {
            Eigen::VectorXd bp = fit.beta, bm = fit.beta;
            bp[j] += h;
            bm[j] -= h;
            numeric.col(j) = (mean_estimating_function(design, model, bp) -
                              mean_estimating_function(design, model, bm)) /
                             (2.0 * h);
        }
        double rel = (fit.B_hat - numeric).norm() / numeric.norm();
        if (rel >= 1e-5) pass = false;
        char buf[64];
        std::snprintf(buf, sizeof(buf), " B-FD rel=%.1e;", rel);
        detail += buf;
    }

    // Mean-one weights at n=5000 within 3 Monte Carlo SEs (pooled windows).
    {
        SimScenario scenario;
        scenario.n = 5000;
        scenario.T = 6;
        scenario.seed = 719;
        Panel panel = simulate_panel(scenario);
        RegimeSet regimes = enumerate_regimes(2);
        ExpandedTable table = expand_panel(panel, regimes, {});
        double worst_z = 0.0;
        for (int r = 0; r < 4; ++r) {
            for (std::int64_t t = 2; t <= scenario.T; ++t) {
                double sum = 0.0, sumsq = 0.0;
                std::size_t n = 0;
                for (const auto& row : table.rows) {
                    if (row.regime != r || row.t != t) continue;
                    sum += row.weight;
                    sumsq += row.weight * row.weight;
                    ++n;
                }
                double mean = sum / n;
                double sd = std::sqrt((sumsq - sum * mean) / (n - 1.0));
                double z = std::abs(mean - 1.0) / (sd / std::sqrt(static_cast<double>(n)));
                worst_z = std::max(worst_z, z);
            }
        }
        if (worst_z >= 3.0) pass = false;
        char buf[64];
        std::snprintf(buf, sizeof(buf), " weight-mean-one max|z|=%.2f;", worst_z);
        detail += buf;
    }

    // Expansion cardinality is the closed-form count.
    {
        SimScenario scenario;
        scenario.n = 7;
        scenario.T = 9;
        scenario.seed = 720;
        Panel panel = simulate_panel(scenario);
        ExpandedTable table = expand_panel(panel, enumerate_regimes(2), {});
        bool ok = table.n_rows() == 7u * 8u * 4u;
        ExpandedTable filtered = expand_panel(panel, enumerate_regimes(3, 1), {});
        ok = ok && filtered.n_rows() == 7u * 7u * 4u;
        if (!ok) pass = false;
        detail += ok ? " cardinality=exact;" : " cardinality=WRONG;";
    }

    // Open-loop full expansion == observed-sequence GEE.
    {
        std::ostringstream csv;
        csv.precision(17);
        csv << "subject,t,I,A,Y,pi\n";
        Rng rng(721, 0);
        for (int s = 0; s < 40; ++s)
            for (int t = 1; t <= 8; ++t) {
                int a = rng.bernoulli(0.5) ? 1 : 0;
                csv << "s" << s << "," << t << ",1," << a << ","
                    << (0.3 + 0.9 * a + rng.normal()) << ",0.5\n";
            }
        Panel panel = ingest_string(csv.str());
        WorkingModel model = make_saturated(2);
        ExpandedTable full = expand_panel(panel, enumerate_regimes(2), {});
        ExpandOptions obs;
        obs.observed_only = true;
        ExpandedTable observed = expand_panel(panel, enumerate_regimes(2), {}, obs);
        FitResult a = solve_beta(build_design(full, model), model, {});
        FitResult b = solve_beta(build_design(observed, model), model, {});
        double gap = (a.beta - b.beta).cwiseAbs().maxCoeff();
        if (gap >= 1e-10) pass = false;
        char buf[64];
        std::snprintf(buf, sizeof(buf), " openloop-gap=%.1e;", gap);
        detail += buf;
    }

    // Replicate results identical for 1 worker and 4 workers.
    {
        ReplicateSpec spec;
        spec.scenario.n = 30;
        spec.scenario.T = 20;
        spec.scenario.seed = 722;
        spec.reps = 6;
        spec.vcov_names = {"sandwich"};
        spec.threads = 1;
        ReplicateReport serial = run_replicates(spec);
        spec.threads = 4;
        ReplicateReport parallel = run_replicates(spec);
        bool ok = serial.records.size() == parallel.records.size();
        for (std::size_t i = 0; ok && i < serial.records.size(); ++i)
            ok = serial.records[i].estimate == parallel.records[i].estimate &&
                 serial.records[i].se == parallel.records[i].se;
        if (!ok) pass = false;
        detail += ok ? " thread-determinism=exact" : " thread-determinism=BROKEN";
    }

    report(7, pass, "property suite:" + detail);
}

}  // namespace

int main() {
    auto start = std::chrono::steady_clock::now();
    int threads = resolve_threads(0);
    std::printf("acceptance suite (threads=%d)\n", threads);

    criterion1(threads);
    criterion2(threads);
    criterion3();
    criterion4();
    criterion5(threads);
    criterion6();
    criterion7();

    std::printf("%d of 7 criteria passed in %.1fs\n", 7 - g_failures, elapsed_s(start));
    return g_failures;
}
