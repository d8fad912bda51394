#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "hrmsm/common.hpp"
#include "hrmsm/estimator.hpp"
#include "hrmsm/mr.hpp"
#include "hrmsm/msm.hpp"
#include "hrmsm/panel.hpp"
#include "hrmsm/regimes.hpp"
#include "hrmsm/simulate.hpp"

namespace py = pybind11;
using namespace hrmsm;

namespace {

SimScenario make_scenario(const std::string& kind, int n, int T, std::uint64_t seed,
                          std::optional<std::vector<double>> alpha, double sigma,
                          std::optional<std::vector<double>> gamma_coefs, double gamma0,
                          double active_fraction) {
    SimScenario s;
    if (kind == "closed-loop")
        s.kind = SimScenario::Kind::closed_loop_main;
    else if (kind == "feedback")
        s.kind = SimScenario::Kind::feedback_cancel;
    else
        throw ConfigError("kind must be 'closed-loop' or 'feedback'");
    s.n = n;
    s.T = T;
    s.seed = seed;
    if (alpha) {
        if (alpha->size() != 4) throw ConfigError("alpha needs 4 values");
        std::copy(alpha->begin(), alpha->end(), s.closed_loop.alpha.begin());
    }
    s.closed_loop.sigma = sigma;
    if (gamma_coefs) {
        if (gamma_coefs->size() != 4) throw ConfigError("gamma_coefs needs 4 values");
        std::copy(gamma_coefs->begin(), gamma_coefs->end(), s.feedback.gamma.begin());
    }
    s.feedback.gamma0 = gamma0;
    s.feedback.active_fraction = active_fraction;
    s.feedback.sigma = sigma;
    return s;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::optional<int> opt_dose(int max_dose) {
    return max_dose >= 0 ? std::optional<int>(max_dose) : std::nullopt;
}

PanelSchema make_schema(const std::string& subject, const std::string& time,
                        const std::string& availability, const std::string& treatment,
                        const std::string& outcome, const std::string& propensity,
                        std::vector<std::string> baseline, const std::string& delimiter,
                        double epsilon, std::optional<double> constant_propensity) {
    PanelSchema schema;
    schema.subject = subject;
    schema.time = time;
    schema.availability = availability;
    schema.treatment = treatment;
    schema.outcome = outcome;
    schema.propensity = propensity;
    schema.baseline_columns = std::move(baseline);
    schema.delimiter = delimiter == "tab" || delimiter == "\t" ? '\t' : ',';
    schema.epsilon = epsilon;
    schema.constant_propensity = constant_propensity;
    return schema;
}

py::dict wald_dict(const Contrast& c) {
    py::dict d;
    d["name"] = c.name;
    d["estimate"] = c.estimate;
    d["se"] = c.se;
    d["lo"] = c.lo;
    d["hi"] = c.hi;
    d["p_value"] = c.p_value;
    d["level"] = c.level;
    d["vcov"] = c.vcov_name;
    return d;
}

SolveOptions make_solve_options(double tol, int max_iter, std::vector<std::string> vcov,
                                int threads) {
    SolveOptions opts;
    opts.tol = tol;
    opts.max_iter = max_iter;
    opts.vcov_names = std::move(vcov);
    opts.threads = threads;
    return opts;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "History-restricted MSM excursion-effect estimation";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_RuntimeError);

    py::class_<Panel>(m, "Panel")
        .def_property_readonly("n_subjects", &Panel::n_subjects)
        .def_property_readonly("n_records", &Panel::n_records)
        .def_property_readonly("covariate_names", &Panel::covariate_names)
        .def_property_readonly("baseline_names", &Panel::baseline_names)
        .def("to_csv", [](const Panel& p) { return serialize_string(p); })
        .def("subset_by_baseline", &Panel::subset_by_baseline, py::arg("name"), py::arg("value"))
        .def_static(
            "from_csv",
            [](const std::string& text, const std::string& subject, const std::string& time,
               const std::string& availability, const std::string& treatment,
               const std::string& outcome, const std::string& propensity,
               std::vector<std::string> baseline, const std::string& delimiter, double epsilon,
               std::optional<double> constant_propensity) {
                return ingest_string(text, make_schema(subject, time, availability, treatment,
                                                       outcome, propensity, std::move(baseline),
                                                       delimiter, epsilon, constant_propensity));
            },
            py::arg("text"), py::arg("subject") = "subject", py::arg("time") = "t",
            py::arg("availability") = "I", py::arg("treatment") = "A", py::arg("outcome") = "Y",
            py::arg("propensity") = "pi", py::arg("baseline") = std::vector<std::string>{},
            py::arg("delimiter") = ",", py::arg("epsilon") = 0.01,
            py::arg("constant_propensity") = std::nullopt);

    m.def(
        "validate_positivity",
        [](const Panel& panel, double epsilon) {
            PositivityReport rep = validate_positivity(panel, epsilon);
            py::list out;
            for (const auto& v : rep.violations) {
                py::dict d;
                d["subject"] = v.subject;
                d["t"] = v.t;
                d["propensity"] = v.propensity;
                out.append(d);
            }
            return out;
        },
        py::arg("panel"), py::arg("epsilon") = 0.01);

    m.def(
        "simulate_panel",
        [](const std::string& kind, int n, int T, std::uint64_t seed,
           std::optional<std::vector<double>> alpha, double sigma,
           std::optional<std::vector<double>> gamma_coefs, double gamma0,
           double active_fraction, std::uint64_t replicate) {
            return simulate_panel(make_scenario(kind, n, T, seed, std::move(alpha), sigma,
                                                std::move(gamma_coefs), gamma0, active_fraction),
                                  replicate);
        },
        py::arg("kind") = "closed-loop", py::arg("n") = 100, py::arg("T") = 50,
        py::arg("seed") = 1, py::arg("alpha") = std::nullopt, py::arg("sigma") = 1.0,
        py::arg("gamma_coefs") = std::nullopt, py::arg("gamma0") = 0.0,
        py::arg("active_fraction") = 0.5, py::arg("replicate") = 0);

    m.def(
        "enumerate_regimes",
        [](int gamma, int max_dose) {
            RegimeSet set = enumerate_regimes(gamma, opt_dose(max_dose));
            std::vector<std::string> labels;
            for (const auto& s : set.sequences) labels.push_back(s.label());
            return labels;
        },
        py::arg("gamma"), py::arg("max_dose") = -1);

    m.def(
        "ip_weight",
        [](const std::string& label, const Panel& panel, std::size_t subject, std::int64_t t) {
            RegimeSequence seq = RegimeSequence::from_label(label);
            const auto& records = panel.subject(subject).records;
            if (t < seq.gamma() || t > static_cast<std::int64_t>(records.size()))
                throw ConfigError("window end t out of range");
            std::span<const TrajectoryRecord> window(
                &records[static_cast<std::size_t>(t - seq.gamma())],
                static_cast<std::size_t>(seq.gamma()));
            return ip_weight(seq, window);
        },
        py::arg("regime"), py::arg("panel"), py::arg("subject"), py::arg("t"),
        "Inverse-probability weight of one regime over one subject window");

    py::class_<ExpandedTable>(m, "ExpandedTable")
        .def_property_readonly("n_rows", &ExpandedTable::n_rows)
        .def_readonly("gamma", &ExpandedTable::gamma)
        .def_readonly("regime_labels", &ExpandedTable::regime_labels)
        .def_readonly("modifier_names", &ExpandedTable::modifier_names)
        .def_readonly("weight_warnings", &ExpandedTable::weight_warnings)
        .def("to_csv", [](const ExpandedTable& t) { return write_expanded_string(t); })
        .def_static("from_csv", [](const std::string& text) {
            std::istringstream in(text);
            return read_expanded(in);
        });

    m.def(
        "expand",
        [](const Panel& panel, int gamma, int max_dose, std::vector<std::string> modifiers,
           bool observed_only, std::optional<double> warn_weight_above) {
            ExpandOptions opts;
            opts.observed_only = observed_only;
            opts.weight_warn_threshold = warn_weight_above;
            return expand_panel(panel, enumerate_regimes(gamma, opt_dose(max_dose)), modifiers,
                                opts);
        },
        py::arg("panel"), py::arg("gamma"), py::arg("max_dose") = -1,
        py::arg("modifiers") = std::vector<std::string>{}, py::arg("observed_only") = false,
        py::arg("warn_weight_above") = std::nullopt);

    py::class_<WorkingModel>(m, "WorkingModel")
        .def_property_readonly("q", &WorkingModel::q)
        .def_property_readonly("feature_names", &WorkingModel::feature_names)
        .def("to_json", &WorkingModel::to_json)
        .def_static("from_json", &WorkingModel::from_json, py::arg("text"));

    m.def(
        "make_saturated",
        [](int gamma, const std::string& link) {
            return make_saturated(gamma, link_from_name(link));
        },
        py::arg("gamma"), py::arg("link") = "identity");

    py::class_<FitResult>(m, "Fit")
        .def_property_readonly(
            "beta",
            [](const FitResult& f) {
                return std::vector<double>(f.beta.data(), f.beta.data() + f.beta.size());
            })
        .def_readonly("feature_names", &FitResult::feature_names)
        .def_readonly("converged", &FitResult::converged)
        .def_readonly("iterations", &FitResult::iterations)
        .def_readonly("residual_norm", &FitResult::residual_norm)
        .def_readonly("n_subjects", &FitResult::n_subjects)
        .def_readonly("n_rows", &FitResult::n_rows)
        .def_readonly("link", &FitResult::link)
        .def("vcov",
             [](const FitResult& f, const std::string& name) {
                 auto it = f.vcov.find(name);
                 if (it == f.vcov.end()) throw ConfigError("UnknownVcov: '" + name + "'");
                 std::vector<std::vector<double>> out;
                 for (Eigen::Index i = 0; i < it->second.rows(); ++i) {
                     std::vector<double> row;
                     for (Eigen::Index j = 0; j < it->second.cols(); ++j)
                         row.push_back(it->second(i, j));
                     out.push_back(std::move(row));
                 }
                 return out;
             },
             py::arg("name") = "sandwich")
        .def("wald",
             [](const FitResult& f, const std::vector<double>& c, double level,
                const std::string& vcov, const std::string& name) {
                 return wald_dict(wald(f, to_vector(c), level, vcov, name));
             },
             py::arg("c"), py::arg("level") = 0.95, py::arg("vcov") = "sandwich",
             py::arg("name") = "")
        .def("to_json", &FitResult::to_json)
        .def_static("from_json", &FitResult::from_json, py::arg("text"));

    m.def(
        "fit_ipw",
        [](const Panel& panel, const WorkingModel& model, int gamma, int max_dose,
           std::vector<std::string> modifiers, bool observed_only, double tol, int max_iter,
           std::vector<std::string> vcov, int threads) {
            for (const auto& f : model.features)
                if (f.kind == Feature::Kind::modifier &&
                    std::find(modifiers.begin(), modifiers.end(), f.name) == modifiers.end())
                    modifiers.push_back(f.name);
            ExpandOptions eopts;
            eopts.observed_only = observed_only;
            ExpandedTable table =
                expand_panel(panel, enumerate_regimes(gamma, opt_dose(max_dose)), modifiers,
                             eopts);
            DesignMatrix design = build_design(table, model);
            return solve_beta(design, model, make_solve_options(tol, max_iter, vcov, threads));
        },
        py::arg("panel"), py::arg("model"), py::arg("gamma") = 2, py::arg("max_dose") = -1,
        py::arg("modifiers") = std::vector<std::string>{}, py::arg("observed_only") = false,
        py::arg("tol") = 1e-9, py::arg("max_iter") = 100,
        py::arg("vcov") = std::vector<std::string>{"sandwich", "CR1", "CR2", "CR3"},
        py::arg("threads") = 1);

    m.def(
        "fit_expanded",
        [](const ExpandedTable& table, const WorkingModel& model, double tol, int max_iter,
           std::vector<std::string> vcov, int threads) {
            DesignMatrix design = build_design(table, model);
            return solve_beta(design, model, make_solve_options(tol, max_iter, vcov, threads));
        },
        py::arg("table"), py::arg("model"), py::arg("tol") = 1e-9, py::arg("max_iter") = 100,
        py::arg("vcov") = std::vector<std::string>{"sandwich", "CR1", "CR2", "CR3"},
        py::arg("threads") = 1);

    m.def(
        "fit_conditional",
        [](const Panel& panel, const WorkingModel& model, double tol, int max_iter,
           std::vector<std::string> vcov) {
            return availability_conditional_fit(panel, model,
                                                make_solve_options(tol, max_iter, vcov, 1));
        },
        py::arg("panel"), py::arg("model"), py::arg("tol") = 1e-9, py::arg("max_iter") = 100,
        py::arg("vcov") = std::vector<std::string>{"sandwich", "CR1", "CR2", "CR3"});

    m.def(
        "fit_mr",
        [](const Panel& panel, const WorkingModel& model, int folds, std::uint64_t seed,
           const std::string& nuisance, double constant_pi, bool zero_outcome_model,
           std::vector<std::string> covariates, int max_dose,
           std::vector<std::string> vcov) {
            MrOptions opts;
            opts.plan.folds = folds;
            opts.plan.seed = seed;
            if (nuisance == "known")
                opts.nuisances.propensity = PropensityMode::known;
            else if (nuisance == "fitted")
                opts.nuisances.propensity = PropensityMode::fitted;
            else if (nuisance == "constant")
                opts.nuisances.propensity = PropensityMode::constant;
            else
                throw ConfigError("nuisance must be known, fitted, or constant");
            opts.nuisances.constant_pi = constant_pi;
            opts.nuisances.zero_outcome_model = zero_outcome_model;
            opts.nuisances.covariates = std::move(covariates);
            opts.max_dose = opt_dose(max_dose);
            opts.solve.vcov_names = std::move(vcov);
            return solve_mr(panel, model, 2, opts).fit;
        },
        py::arg("panel"), py::arg("model"), py::arg("folds") = 2, py::arg("seed") = 1,
        py::arg("nuisance") = "known", py::arg("constant_pi") = 0.5,
        py::arg("zero_outcome_model") = false,
        py::arg("covariates") = std::vector<std::string>{}, py::arg("max_dose") = -1,
        py::arg("vcov") = std::vector<std::string>{"sandwich", "CR1", "CR2", "CR3"});

    m.def(
        "true_beta",
        [](const std::vector<double>& alpha) {
            if (alpha.size() != 4) throw ConfigError("alpha needs 4 values");
            TruthReport t = true_beta({alpha[0], alpha[1], alpha[2], alpha[3]});
            py::dict d;
            d["beta"] = std::vector<double>(t.beta.begin(), t.beta.end());
            d["blip"] = t.blip;
            d["dissipation"] = t.dissipation;
            d["dose_curve"] = std::vector<double>(t.dose_curve.begin(), t.dose_curve.end());
            return d;
        },
        py::arg("alpha"));

    m.def(
        "feedback_macro_difference",
        [](const std::vector<double>& gamma) {
            if (gamma.size() != 4) throw ConfigError("gamma needs 4 values");
            return feedback_macro_difference({gamma[0], gamma[1], gamma[2], gamma[3]});
        },
        py::arg("gamma"));

    m.def(
        "forced_regime_mean",
        [](const std::string& regime, const std::vector<double>& alpha, double sigma,
           std::size_t draws, std::uint64_t seed) {
            if (alpha.size() != 4) throw ConfigError("alpha needs 4 values");
            ClosedLoopParams params;
            std::copy(alpha.begin(), alpha.end(), params.alpha.begin());
            params.sigma = sigma;
            MonteCarloMean mc =
                forced_regime_mean(params, RegimeSequence::from_label(regime), draws, seed);
            return py::make_tuple(mc.mean, mc.se);
        },
        py::arg("regime"), py::arg("alpha"), py::arg("sigma") = 1.0,
        py::arg("draws") = 100000, py::arg("seed") = 1);

    m.def(
        "run_replicates",
        [](const std::string& kind, int n, int T, std::uint64_t seed, int reps,
           const std::string& estimator, int gamma, std::vector<std::string> vcov,
           double level, int threads) {
            ReplicateSpec spec;
            spec.scenario = make_scenario(kind, n, T, seed, std::nullopt, 1.0, std::nullopt,
                                          0.0, 0.5);
            spec.reps = reps;
            spec.gamma = gamma;
            spec.estimator = estimator == "mr" ? ReplicateSpec::Estimator::mr
                                               : ReplicateSpec::Estimator::ipw;
            spec.vcov_names = std::move(vcov);
            spec.level = level;
            spec.threads = threads;
            ReplicateReport rep = run_replicates(spec);
            py::list out;
            for (const auto& s : rep.summaries) {
                py::dict d;
                d["contrast"] = s.contrast;
                d["vcov"] = s.vcov;
                d["truth"] = s.truth;
                d["mean_estimate"] = s.mean_estimate;
                d["bias"] = s.bias;
                d["bias_is_relative"] = s.bias_is_relative;
                d["empirical_sd"] = s.empirical_sd;
                d["mean_se"] = s.mean_se;
                d["coverage"] = s.coverage;
                d["reps_ok"] = s.reps_ok;
                d["reps_failed"] = s.reps_failed;
                out.append(d);
            }
            return out;
        },
        py::arg("kind") = "closed-loop", py::arg("n") = 30, py::arg("T") = 20,
        py::arg("seed") = 1, py::arg("reps") = 10, py::arg("estimator") = "ipw",
        py::arg("gamma") = 2,
        py::arg("vcov") = std::vector<std::string>{"sandwich", "CR1", "CR2", "CR3"},
        py::arg("level") = 0.95, py::arg("threads") = 1);
}
