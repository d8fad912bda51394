#include "hrmsm/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "hrmsm/common.hpp"
#include "hrmsm/csv.hpp"
#include "hrmsm/regimes.hpp"
#include "hrmsm/rng.hpp"

namespace hrmsm {

namespace {

std::string subject_id(int index, int n) {
    int width = 1;
    for (int v = n - 1; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(index);
    return "s" + std::string(static_cast<std::size_t>(width) - digits.size(), '0') + digits;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t replicate) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (replicate + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

Panel simulate_panel(const SimScenario& scenario, std::uint64_t replicate) {
    if (scenario.n < 2 || scenario.T < 2)
        throw ConfigError("InvalidParams: scenario needs n >= 2 and T >= 2");
    const bool feedback = scenario.kind == SimScenario::Kind::feedback_cancel;
    if (feedback) {
        const auto& fp = scenario.feedback;
        if (fp.active_fraction < 0.0 || fp.active_fraction > 1.0)
            throw ConfigError("InvalidParams: active_fraction must be in [0,1]");
        if (fp.sigma < 0.0) throw ConfigError("InvalidParams: sigma must be >= 0");
    } else if (scenario.closed_loop.sigma < 0.0) {
        throw ConfigError("InvalidParams: sigma must be >= 0");
    }

    std::vector<SubjectBlock> subjects(static_cast<std::size_t>(scenario.n));
    int n_active = static_cast<int>(std::lround(scenario.feedback.active_fraction * scenario.n));

    for (int i = 0; i < scenario.n; ++i) {
        Rng rng(scenario.seed, Rng::stream_id(replicate, static_cast<std::uint64_t>(i)));
        SubjectBlock& s = subjects[static_cast<std::size_t>(i)];
        s.id = subject_id(i, scenario.n);
        s.records.reserve(static_cast<std::size_t>(scenario.T));

        if (!feedback) {
            const auto& a = scenario.closed_loop.alpha;
            const double sigma = scenario.closed_loop.sigma;
            int x_prev = rng.bernoulli(0.5) ? 1 : 0;
            int a_prev = rng.bernoulli(0.5 * x_prev) ? 1 : 0;
            for (int t = 1; t <= scenario.T; ++t) {
                int x = rng.bernoulli(0.4 + 0.4 * a_prev) ? 1 : 0;
                int at = rng.bernoulli(0.5 * x) ? 1 : 0;
                double y = rng.normal(a[0] * x_prev + a[1] * a_prev + a[2] * x + a[3] * at, sigma);
                TrajectoryRecord rec;
                rec.t = t;
                rec.availability = x;
                rec.treatment = at;
                rec.outcome = y;
                rec.propensity = 0.5 * x;
                rec.covariates = {static_cast<double>(x)};
                s.records.push_back(std::move(rec));
                x_prev = x;
                a_prev = at;
            }
        } else {
            const auto& g = scenario.feedback.gamma;
            const double g0 = scenario.feedback.gamma0;
            const double sigma = scenario.feedback.sigma;
            const int arm = i < n_active ? 1 : 0;
            s.baseline = {static_cast<double>(arm)};
            int x_prev = rng.bernoulli(0.5) ? 1 : 0;
            int a_prev = rng.bernoulli(0.8 * x_prev) ? 1 : 0;
            for (int t = 1; t <= scenario.T; ++t) {
                int x = rng.bernoulli(0.7 - 0.5 * a_prev * arm) ? 1 : 0;
                int at = rng.bernoulli(0.8 * x) ? 1 : 0;
                double y = rng.normal(
                    g0 + g[0] * x_prev + g[2] * x + arm * (g[1] * a_prev + g[3] * at), sigma);
                TrajectoryRecord rec;
                rec.t = t;
                rec.availability = x;
                rec.treatment = at;
                rec.outcome = y;
                rec.propensity = 0.8 * x;
                rec.covariates = {static_cast<double>(x)};
                s.records.push_back(std::move(rec));
                x_prev = x;
                a_prev = at;
            }
        }
    }
    std::vector<std::string> baseline_names;
    if (feedback) baseline_names = {"G"};
    return Panel({"X"}, baseline_names, std::move(subjects), 0.01);
}

TruthReport true_beta(const std::array<double, 4>& alpha) {
    TruthReport out;
    out.beta = {0.5 * alpha[0] + 0.4 * alpha[2], 0.5 * alpha[1] + 0.2 * alpha[2],
                0.4 * alpha[3], 0.2 * alpha[3]};
    out.blip = out.beta[2];
    out.dissipation = out.beta[2] - out.beta[1];
    out.dose_curve = {out.beta[0], out.beta[0] + 0.5 * (out.beta[1] + out.beta[2]),
                      out.beta[0] + out.beta[1] + out.beta[2] + out.beta[3]};
    return out;
}

TruthReport feedback_true_beta(const FeedbackParams& params, int g) {
    const auto& c = params.gamma;
    TruthReport out;
    if (g == 0) {
        // Treatment never enters; X is Bern(0.7) regardless of the regime.
        out.beta = {params.gamma0 + 0.7 * c[0] + 0.7 * c[2], 0.0, 0.0, 0.0};
    } else {
        // E[X] = 0.5 in the active arm; a lagged opportunity shifts the next
        // X mean by -0.25 and contributes 0.5 * gamma2 directly.
        out.beta = {params.gamma0 + 0.5 * c[0] + 0.7 * c[2], 0.5 * c[1] - 0.25 * c[2],
                    0.7 * c[3], -0.25 * c[3]};
    }
    out.blip = out.beta[2];
    out.dissipation = out.beta[2] - out.beta[1];
    out.dose_curve = {out.beta[0], out.beta[0] + 0.5 * (out.beta[1] + out.beta[2]),
                      out.beta[0] + out.beta[1] + out.beta[2] + out.beta[3]};
    return out;
}

double feedback_macro_difference(const std::array<double, 4>& gamma) {
    return -0.2 * (gamma[0] + gamma[2]) + 0.4 * (gamma[1] + gamma[3]);
}

MonteCarloMean forced_regime_mean(const ClosedLoopParams& params, const RegimeSequence& seq,
                                  std::size_t draws, std::uint64_t seed) {
    if (seq.gamma() != 2)
        throw ConfigError("forced_regime_mean is defined on the 2-timepoint instance");
    const auto& a = params.alpha;
    const int j1 = seq.atoms[0] == RegimeAtom::treat_if_available ? 1 : 0;
    const int j2 = seq.atoms[1] == RegimeAtom::treat_if_available ? 1 : 0;
    Rng rng(seed, Rng::stream_id(0xFFFFFFFEull, static_cast<std::uint64_t>(j1 * 2 + j2)));
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
        int x0 = rng.bernoulli(0.5) ? 1 : 0;
        int a0 = rng.bernoulli(0.5 * x0) ? 1 : 0;
        int x1 = rng.bernoulli(0.4 + 0.4 * a0) ? 1 : 0;
        int a1 = j1 * x1;  // intervention replaces the natural draw
        int x2 = rng.bernoulli(0.4 + 0.4 * a1) ? 1 : 0;
        int a2 = j2 * x2;
        double y = rng.normal(a[0] * x1 + a[1] * a1 + a[2] * x2 + a[3] * a2, params.sigma);
        sum += y;
        sumsq += y * y;
    }
    MonteCarloMean out;
    out.draws = draws;
    out.mean = sum / static_cast<double>(draws);
    double var = (sumsq - sum * sum / static_cast<double>(draws)) /
                 (static_cast<double>(draws) - 1.0);
    out.se = std::sqrt(var / static_cast<double>(draws));
    return out;
}

std::vector<ContrastSpec> default_contrasts(const TruthReport& truth) {
    std::vector<ContrastSpec> out;
    auto make = [](const std::string& name, std::initializer_list<double> c, double t) {
        ContrastSpec spec;
        spec.name = name;
        spec.c = Eigen::Map<const Eigen::VectorXd>(c.begin(),
                                                   static_cast<Eigen::Index>(c.size()));
        spec.truth = t;
        return spec;
    };
    out.push_back(make("blip", {0, 0, 1, 0}, truth.blip));
    out.push_back(make("dissipation", {0, -1, 1, 0}, truth.dissipation));
    out.push_back(make("dose", {0, 0.5, 0.5, 0}, 0.5 * (truth.beta[1] + truth.beta[2])));
    out.push_back(make("beta0", {1, 0, 0, 0}, truth.beta[0]));
    out.push_back(make("beta1", {0, 1, 0, 0}, truth.beta[1]));
    out.push_back(make("beta2", {0, 0, 1, 0}, truth.beta[2]));
    out.push_back(make("beta3", {0, 0, 0, 1}, truth.beta[3]));
    return out;
}

ReplicateReport run_replicates(const ReplicateSpec& spec) {
    if (spec.reps < 1) throw ConfigError("InvalidParams: reps must be >= 1");
    WorkingModel model = spec.model;
    if (model.features.empty()) model = make_saturated(spec.gamma);

    std::vector<ContrastSpec> contrasts = spec.contrasts;
    if (contrasts.empty()) {
        if (spec.scenario.kind != SimScenario::Kind::closed_loop_main)
            throw ConfigError("contrasts with truth values are required for this scenario");
        if (model.q() != 4)
            throw ConfigError("default contrasts assume the saturated gamma=2 model (q=4)");
        contrasts = default_contrasts(true_beta(spec.scenario.closed_loop.alpha));
    }
    for (const auto& c : contrasts)
        if (c.c.size() != model.q())
            throw ConfigError("contrast '" + c.name + "' length " + std::to_string(c.c.size()) +
                              " != q=" + std::to_string(model.q()));

    std::vector<std::string> modifier_names;
    for (const auto& f : model.features)
        if (f.kind == Feature::Kind::modifier) modifier_names.push_back(f.name);

    struct RepResult {
        bool ok = false;
        std::string error;
        std::vector<double> estimates;                          // per contrast
        std::vector<std::vector<double>> ses;                   // per contrast x vcov
    };
    std::vector<RepResult> results(static_cast<std::size_t>(spec.reps));

    const RegimeSet regimes = enumerate_regimes(spec.gamma, spec.max_dose);

    parallel_for(static_cast<std::size_t>(spec.reps), spec.threads, [&](std::size_t r) {
        RepResult& res = results[r];
        try {
            Panel panel = simulate_panel(spec.scenario, r);
            FitResult fit;
            if (spec.estimator == ReplicateSpec::Estimator::ipw) {
                ExpandedTable table = expand_panel(panel, regimes, modifier_names, {});
                DesignMatrix design = build_design(table, model);
                SolveOptions opts;
                opts.vcov_names = spec.vcov_names;
                fit = solve_beta(design, model, opts);
            } else {
                MrOptions mr = spec.mr;
                mr.max_dose = spec.max_dose;
                mr.plan.seed = mix_seed(spec.mr.plan.seed, r);
                mr.solve.vcov_names = spec.vcov_names;
                fit = solve_mr(panel, model, spec.gamma, mr).fit;
            }
            for (const auto& c : contrasts) {
                res.estimates.push_back(c.c.dot(fit.beta));
                std::vector<double> ses;
                for (const auto& vname : spec.vcov_names) {
                    Contrast w = wald(fit, c.c, spec.level, vname, c.name);
                    ses.push_back(w.se);
                }
                res.ses.push_back(std::move(ses));
            }
            res.ok = true;
        } catch (const std::exception& e) {
            res.ok = false;
            res.error = e.what();
        }
    });

    ReplicateReport report;
    double z = normal_quantile(1.0 - (1.0 - spec.level) / 2.0);
    for (std::size_t r = 0; r < results.size(); ++r) {
        const RepResult& res = results[r];
        if (!res.ok) {
            ++report.reps_failed;
            if (report.failures.size() < 10) report.failures.push_back(res.error);
            continue;
        }
        for (std::size_t ci = 0; ci < contrasts.size(); ++ci)
            for (std::size_t vi = 0; vi < spec.vcov_names.size(); ++vi) {
                ReplicateRecord rec;
                rec.replicate = static_cast<int>(r);
                rec.contrast = contrasts[ci].name;
                rec.vcov = spec.vcov_names[vi];
                rec.estimate = res.estimates[ci];
                rec.se = res.ses[ci][vi];
                double delta = z * rec.se;
                rec.covered = (contrasts[ci].truth >= rec.estimate - delta &&
                               contrasts[ci].truth <= rec.estimate + delta)
                                  ? 1
                                  : 0;
                report.records.push_back(std::move(rec));
            }
    }

    for (std::size_t ci = 0; ci < contrasts.size(); ++ci) {
        for (std::size_t vi = 0; vi < spec.vcov_names.size(); ++vi) {
            ReplicateSummary s;
            s.contrast = contrasts[ci].name;
            s.vcov = spec.vcov_names[vi];
            s.truth = contrasts[ci].truth;
            s.reps_failed = report.reps_failed;
            double sum = 0.0, sumsq = 0.0, se_sum = 0.0;
            int n_ok = 0, n_cov = 0;
            for (const auto& rec : report.records) {
                if (rec.contrast != s.contrast || rec.vcov != s.vcov) continue;
                sum += rec.estimate;
                sumsq += rec.estimate * rec.estimate;
                se_sum += rec.se;
                n_cov += rec.covered;
                ++n_ok;
            }
            s.reps_ok = n_ok;
            if (n_ok > 0) {
                s.mean_estimate = sum / n_ok;
                s.mean_se = se_sum / n_ok;
                s.coverage = static_cast<double>(n_cov) / n_ok;
                if (n_ok > 1)
                    s.empirical_sd =
                        std::sqrt(std::max(0.0, (sumsq - sum * sum / n_ok) / (n_ok - 1)));
                if (s.truth != 0.0) {
                    s.bias = (s.mean_estimate - s.truth) / s.truth;
                    s.bias_is_relative = true;
                } else {
                    s.bias = s.mean_estimate;
                    s.bias_is_relative = false;
                }
            }
            report.summaries.push_back(std::move(s));
        }
    }
    return report;
}

void write_replicate_summaries(const ReplicateReport& report, std::ostream& out, char delim) {
    write_row(out,
              {"contrast", "vcov", "truth", "mean_estimate", "bias", "bias_kind", "empirical_sd",
               "mean_se", "coverage", "reps_ok", "reps_failed"},
              delim);
    for (const auto& s : report.summaries)
        write_row(out,
                  {s.contrast, s.vcov, format_double(s.truth), format_double(s.mean_estimate),
                   format_double(s.bias), s.bias_is_relative ? "relative" : "absolute",
                   format_double(s.empirical_sd), format_double(s.mean_se),
                   format_double(s.coverage), std::to_string(s.reps_ok),
                   std::to_string(s.reps_failed)},
                  delim);
}

void write_replicate_records(const ReplicateReport& report, std::ostream& out, char delim) {
    write_row(out, {"replicate", "contrast", "vcov", "estimate", "se", "covered"}, delim);
    for (const auto& r : report.records)
        write_row(out,
                  {std::to_string(r.replicate), r.contrast, r.vcov, format_double(r.estimate),
                   format_double(r.se), std::to_string(r.covered)},
                  delim);
}

}  // namespace hrmsm
