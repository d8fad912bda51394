#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "hrmsm/common.hpp"
#include "hrmsm/csv.hpp"
#include "hrmsm/estimator.hpp"
#include "hrmsm/mr.hpp"
#include "hrmsm/msm.hpp"
#include "hrmsm/panel.hpp"
#include "hrmsm/regimes.hpp"
#include "hrmsm/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hrmsm;

namespace {

constexpr const char* kVersion = "0.1.0";

void atomic_write(const std::string& path, const std::string& content) {
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("IO: cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw DataError("IO: short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, target);
}

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("referenced file does not exist: '" + path + "'");
}

std::string slurp(const std::string& path) {
    require_file(path);
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load_config(const std::string& path) {
    try {
        return json::parse(slurp(path));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("ConfigParse: ") + e.what());
    }
}

// Flags override config fields; config fields override defaults.
template <typename T>
void fallback(const json& cfg, const CLI::Option* opt, const std::string& key, T& var) {
    if (opt != nullptr && opt->count() > 0) return;
    if (cfg.contains(key)) {
        try {
            var = cfg.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("ConfigParse: field '" + key + "': " + e.what());
        }
    }
}

template <typename T>
void fallback(const json& cfg, const CLI::Option* opt, const std::string& key,
              std::optional<T>& var) {
    if (opt != nullptr && opt->count() > 0) return;
    if (cfg.contains(key) && !cfg.at(key).is_null()) {
        try {
            var = cfg.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("ConfigParse: field '" + key + "': " + e.what());
        }
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& tok : split_list(s)) out.push_back(parse_double(tok, what));
    return out;
}

char resolve_delimiter(const std::string& name) {
    if (name == "," || name == "comma") return ',';
    if (name == "\t" || name == "tab") return '\t';
    throw ConfigError("delimiter must be 'comma' or 'tab'");
}

struct ContrastRequest {
    std::string name;
    std::optional<std::string> preset;       // blip | dissipation | dose
    std::optional<Eigen::VectorXd> c;
    std::optional<double> truth;             // for simulate presets on custom vectors
};

ContrastRequest parse_contrast(const std::string& text) {
    ContrastRequest req;
    auto eq = text.find('=');
    if (eq == std::string::npos) {
        req.name = text;
        req.preset = text;
        return req;
    }
    req.name = text.substr(0, eq);
    std::string rhs = text.substr(eq + 1);
    auto colon = rhs.find(':');
    std::string vec = rhs;
    if (colon != std::string::npos) {
        req.truth = parse_double(rhs.substr(0, colon), "contrast truth");
        vec = rhs.substr(colon + 1);
    }
    auto vals = parse_doubles(vec, "contrast vector");
    req.c = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    return req;
}

// The three headline estimands on the saturated gamma=2 layout.
std::vector<std::pair<std::string, Eigen::VectorXd>> expand_preset(const std::string& preset,
                                                                   int q) {
    auto vec = [](std::initializer_list<double> v) {
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(
            v.begin(), static_cast<Eigen::Index>(v.size())));
    };
    if (q != 4)
        throw ConfigError("contrast preset '" + preset +
                          "' is defined for the saturated gamma=2 model (q=4), got q=" +
                          std::to_string(q));
    if (preset == "blip") return {{"blip", vec({0, 0, 1, 0})}};
    if (preset == "dissipation") return {{"dissipation", vec({0, -1, 1, 0})}};
    if (preset == "dose")
        return {{"dose_0", vec({1, 0, 0, 0})},
                {"dose_1", vec({1, 0.5, 0.5, 0})},
                {"dose_2", vec({1, 1, 1, 1})}};
    throw ConfigError("unknown contrast preset '" + preset +
                      "' (expected blip, dissipation, or dose)");
}

std::string contrast_table(const FitResult& fit,
                           const std::vector<std::pair<std::string, Eigen::VectorXd>>& contrasts,
                           double level, const std::string& vcov_name) {
    std::ostringstream out;
    write_row(out, {"name", "vcov", "estimate", "se", "lo", "hi", "p_value", "level"});
    for (const auto& [name, c] : contrasts) {
        Contrast w = wald(fit, c, level, vcov_name, name);
        write_row(out, {name, vcov_name, format_double(w.estimate), format_double(w.se),
                        format_double(w.lo), format_double(w.hi), format_double(w.p_value),
                        format_double(level)});
    }
    return out.str();
}

std::string coefficient_table(const FitResult& fit, const std::vector<std::string>& vcovs) {
    std::ostringstream out;
    std::vector<std::string> header = {"feature", "estimate"};
    for (const auto& v : vcovs) header.push_back("se_" + v);
    write_row(out, header);
    for (int j = 0; j < fit.q(); ++j) {
        std::vector<std::string> cells = {fit.feature_names[static_cast<std::size_t>(j)],
                                          format_double(fit.beta[j])};
        for (const auto& v : vcovs)
            cells.push_back(format_double(std::sqrt(fit.vcov.at(v)(j, j))));
        write_row(out, cells);
    }
    return out.str();
}

json manifest_skeleton(const std::string& command, const json& resolved) {
    json m;
    m["tool"] = "hrmsm";
    m["version"] = kVersion;
    m["command"] = command;
    m["config"] = resolved;
    return m;
}

void write_manifest(const std::string& prefix, json manifest,
                    const std::vector<std::string>& outputs) {
    manifest["outputs"] = outputs;
    atomic_write(prefix + ".manifest.json", manifest.dump(2) + "\n");
}

struct PanelArgs {
    std::string input;
    std::string delimiter = "comma";
    double epsilon = 0.01;
    std::vector<std::string> baseline;
    std::optional<double> constant_pi;

    Panel load() const {
        require_file(input);
        PanelSchema schema;
        schema.delimiter = resolve_delimiter(delimiter);
        schema.epsilon = epsilon;
        schema.baseline_columns = baseline;
        schema.constant_propensity = constant_pi;
        return ingest_file(input, schema);
    }
    json echo() const {
        json j;
        j["input"] = input;
        j["delimiter"] = delimiter;
        j["epsilon"] = epsilon;
        j["baseline_columns"] = baseline;
        if (constant_pi) j["constant_propensity"] = *constant_pi;
        return j;
    }
};

WorkingModel resolve_model(const std::string& model_path, int gamma, const std::string& link) {
    if (!model_path.empty()) return WorkingModel::from_json(slurp(model_path));
    return make_saturated(gamma, link_from_name(link));
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::numeric: return 4;
    }
    return 4;
}

void print_error(const std::string& type, const std::string& message) {
    json err;
    err["error"] = {{"type", type}, {"message", message}};
    std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"History-restricted MSM excursion-effect estimation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "JSON config; flags override its fields")
        ->configurable(false);
    int threads = 0;
    auto* opt_threads =
        app.add_option("--threads", threads, "worker cap (default: HRMSM_THREADS or all cores)");

    // ---- fit ----------------------------------------------------------
    auto* fit_cmd = app.add_subcommand("fit", "IPW fit of a dynamic-regime HR-MSM");
    PanelArgs fit_panel;
    bool fit_expanded = false;
    std::string fit_model_path, fit_link = "identity", fit_output, fit_ci_vcov = "sandwich";
    int fit_gamma = 2;
    int fit_max_dose = -1;
    bool fit_observed_only = false;
    double fit_tol = 1e-9, fit_level = 0.95;
    int fit_max_iter = 100;
    std::vector<std::string> fit_vcovs = {"sandwich", "CR1", "CR2", "CR3"};
    std::vector<std::string> fit_contrasts;
    std::vector<std::string> fit_modifiers;
    auto* o_fi = fit_cmd->add_option("--input", fit_panel.input, "panel CSV (or expanded CSV)");
    auto* o_fe = fit_cmd->add_flag("--expanded", fit_expanded, "input is an expanded table");
    auto* o_fm = fit_cmd->add_option("--model", fit_model_path, "model spec JSON");
    auto* o_fl = fit_cmd->add_option("--link", fit_link, "link for the default saturated model");
    auto* o_fg = fit_cmd->add_option("--gamma", fit_gamma, "window length");
    auto* o_fd = fit_cmd->add_option("--max-dose", fit_max_dose, "restrict regimes to dose <= k");
    auto* o_fo = fit_cmd->add_flag("--observed-only", fit_observed_only,
                                   "static-design expansion (one regime per window)");
    auto* o_fdel = fit_cmd->add_option("--delimiter", fit_panel.delimiter, "comma or tab");
    auto* o_feps = fit_cmd->add_option("--epsilon", fit_panel.epsilon, "positivity bound");
    auto* o_fb = fit_cmd->add_option("--baseline-cols", fit_panel.baseline,
                                     "per-subject constant columns");
    std::optional<double> fit_const_pi;
    auto* o_fcp = fit_cmd->add_option("--constant-pi", fit_const_pi,
                                      "propensity constant when the pi column is absent");
    auto* o_fmod = fit_cmd->add_option("--modifiers", fit_modifiers,
                                       "extra modifier columns to carry through expansion");
    auto* o_fv = fit_cmd->add_option("--vcov", fit_vcovs, "variance estimators to compute");
    auto* o_fc = fit_cmd->add_option("--contrast", fit_contrasts,
                                     "preset (blip|dissipation|dose) or name=c1,c2,...");
    auto* o_fcv = fit_cmd->add_option("--ci-vcov", fit_ci_vcov, "vcov for contrast intervals");
    auto* o_flv = fit_cmd->add_option("--level", fit_level, "confidence level");
    auto* o_ft = fit_cmd->add_option("--tol", fit_tol, "solver tolerance");
    auto* o_fmi = fit_cmd->add_option("--max-iter", fit_max_iter, "solver iteration cap");
    auto* o_fout = fit_cmd->add_option("--output", fit_output, "output prefix");

    // ---- fit-mr -------------------------------------------------------
    auto* mr_cmd = app.add_subcommand("fit-mr", "multiply-robust gamma=2 fit with cross-fitting");
    PanelArgs mr_panel;
    std::string mr_model_path, mr_link = "identity", mr_output, mr_nuisance = "known";
    int mr_folds = 2, mr_max_dose = -1;
    double mr_constant_pi_hat = 0.5, mr_level = 0.95;
    std::uint64_t mr_seed = 1;
    std::vector<std::string> mr_vcovs = {"sandwich", "CR1", "CR2", "CR3"};
    std::vector<std::string> mr_contrasts;
    std::vector<std::string> mr_covariates;
    auto* o_mi = mr_cmd->add_option("--input", mr_panel.input, "panel CSV");
    auto* o_mm = mr_cmd->add_option("--model", mr_model_path, "model spec JSON");
    auto* o_ml = mr_cmd->add_option("--link", mr_link, "link for the default saturated model");
    auto* o_mf = mr_cmd->add_option("--folds", mr_folds, "cross-fitting folds (>= 2)");
    auto* o_ms = mr_cmd->add_option("--seed", mr_seed, "fold-assignment seed");
    auto* o_mn = mr_cmd->add_option("--nuisance", mr_nuisance,
                                    "propensity nuisance: known, fitted, or constant");
    auto* o_mc = mr_cmd->add_option("--constant-pi-hat", mr_constant_pi_hat,
                                    "value for --nuisance constant");
    auto* o_mcov = mr_cmd->add_option("--nuisance-covariates", mr_covariates,
                                      "covariate columns for nuisance regressions");
    auto* o_md = mr_cmd->add_option("--max-dose", mr_max_dose, "restrict regimes to dose <= k");
    auto* o_mdel = mr_cmd->add_option("--delimiter", mr_panel.delimiter, "comma or tab");
    auto* o_meps = mr_cmd->add_option("--epsilon", mr_panel.epsilon, "positivity bound");
    auto* o_mb = mr_cmd->add_option("--baseline-cols", mr_panel.baseline,
                                    "per-subject constant columns");
    std::optional<double> mr_const_pi;
    auto* o_mcp = mr_cmd->add_option("--constant-pi", mr_const_pi,
                                     "panel propensity constant when the pi column is absent");
    auto* o_mv = mr_cmd->add_option("--vcov", mr_vcovs, "variance estimators to compute");
    auto* o_mct = mr_cmd->add_option("--contrast", mr_contrasts, "contrast presets or vectors");
    auto* o_mlv = mr_cmd->add_option("--level", mr_level, "confidence level");
    auto* o_mout = mr_cmd->add_option("--output", mr_output, "output prefix");

    // ---- fit-conditional ------------------------------------------------
    auto* cond_cmd =
        app.add_subcommand("fit-conditional", "availability-conditional gamma=1 fit");
    PanelArgs cond_panel;
    std::string cond_model_path, cond_link = "identity", cond_output;
    double cond_level = 0.95;
    std::vector<std::string> cond_vcovs = {"sandwich", "CR1", "CR2", "CR3"};
    std::vector<std::string> cond_contrasts;
    auto* o_ci = cond_cmd->add_option("--input", cond_panel.input, "panel CSV");
    auto* o_cm = cond_cmd->add_option("--model", cond_model_path,
                                      "model spec JSON (treatment + modifier features)");
    auto* o_cl = cond_cmd->add_option("--link", cond_link,
                                      "link for the default intercept+treatment model");
    auto* o_cdel = cond_cmd->add_option("--delimiter", cond_panel.delimiter, "comma or tab");
    auto* o_ceps = cond_cmd->add_option("--epsilon", cond_panel.epsilon, "positivity bound");
    auto* o_cb = cond_cmd->add_option("--baseline-cols", cond_panel.baseline,
                                      "per-subject constant columns");
    std::optional<double> cond_const_pi;
    auto* o_ccp = cond_cmd->add_option("--constant-pi", cond_const_pi,
                                       "propensity constant when the pi column is absent");
    auto* o_cv = cond_cmd->add_option("--vcov", cond_vcovs, "variance estimators");
    auto* o_cct = cond_cmd->add_option("--contrast", cond_contrasts, "name=c1,c2,... vectors");
    auto* o_clv = cond_cmd->add_option("--level", cond_level, "confidence level");
    auto* o_cout = cond_cmd->add_option("--output", cond_output, "output prefix");

    // ---- expand ---------------------------------------------------------
    auto* expand_cmd = app.add_subcommand("expand", "regime expansion to an auditable table");
    PanelArgs exp_panel;
    std::string exp_output;
    int exp_gamma = 2, exp_max_dose = -1;
    bool exp_observed_only = false;
    std::vector<std::string> exp_modifiers;
    std::optional<double> exp_weight_warn;
    auto* o_ei = expand_cmd->add_option("--input", exp_panel.input, "panel CSV");
    auto* o_eg = expand_cmd->add_option("--gamma", exp_gamma, "window length");
    auto* o_ed = expand_cmd->add_option("--max-dose", exp_max_dose, "dose filter");
    auto* o_eo = expand_cmd->add_flag("--observed-only", exp_observed_only,
                                      "static-design expansion");
    auto* o_em = expand_cmd->add_option("--modifiers", exp_modifiers, "modifier columns");
    auto* o_ew = expand_cmd->add_option("--warn-weight-above", exp_weight_warn,
                                        "diagnostic weight threshold (no truncation)");
    auto* o_edel = expand_cmd->add_option("--delimiter", exp_panel.delimiter, "comma or tab");
    auto* o_eeps = expand_cmd->add_option("--epsilon", exp_panel.epsilon, "positivity bound");
    auto* o_eb = expand_cmd->add_option("--baseline-cols", exp_panel.baseline,
                                        "per-subject constant columns");
    std::optional<double> exp_const_pi;
    auto* o_ecp = expand_cmd->add_option("--constant-pi", exp_const_pi,
                                         "propensity constant when the pi column is absent");
    auto* o_eout = expand_cmd->add_option("--output", exp_output, "output prefix");

    // ---- simulate ---------------------------------------------------------
    auto* sim_cmd = app.add_subcommand("simulate", "synthetic benchmarks with analytic truth");
    std::string sim_scenario = "closed-loop", sim_estimator = "ipw", sim_output;
    std::string sim_alpha = "0.25,2,1.75,0.5", sim_gamma_coefs = "1,0.5,1,0.5";
    int sim_n = 100, sim_T = 50, sim_reps = 1, sim_gamma = 2, sim_max_dose = -1,
        sim_folds = 2;
    double sim_sigma = 1.0, sim_gamma0 = 0.0, sim_active_fraction = 0.5, sim_level = 0.95;
    std::uint64_t sim_seed = 1;
    bool sim_long = false, sim_emit_panel = false;
    std::string sim_nuisance = "known";
    std::vector<std::string> sim_vcovs = {"sandwich", "CR1", "CR2", "CR3"};
    std::vector<std::string> sim_contrasts;
    auto* o_ss = sim_cmd->add_option("--scenario", sim_scenario, "closed-loop or feedback");
    auto* o_sn = sim_cmd->add_option("--n", sim_n, "subjects");
    auto* o_sT = sim_cmd->add_option("--T", sim_T, "timepoints per subject");
    auto* o_sr = sim_cmd->add_option("--reps", sim_reps, "simulation replicates");
    auto* o_se = sim_cmd->add_option("--estimator", sim_estimator, "ipw or mr");
    auto* o_sa = sim_cmd->add_option("--alpha", sim_alpha, "closed-loop coefficients a1..a4");
    auto* o_ssig = sim_cmd->add_option("--sigma", sim_sigma, "outcome noise sd");
    auto* o_sg = sim_cmd->add_option("--gamma-coefs", sim_gamma_coefs,
                                     "feedback coefficients g1..g4");
    auto* o_sg0 = sim_cmd->add_option("--gamma0", sim_gamma0, "feedback intercept");
    auto* o_saf = sim_cmd->add_option("--active-fraction", sim_active_fraction,
                                      "share of subjects in the active arm");
    auto* o_ssd = sim_cmd->add_option("--seed", sim_seed, "root seed");
    auto* o_sw = sim_cmd->add_option("--gamma", sim_gamma, "window length");
    auto* o_sd = sim_cmd->add_option("--max-dose", sim_max_dose, "dose filter");
    auto* o_sv = sim_cmd->add_option("--vcov", sim_vcovs, "variance estimators");
    auto* o_sc = sim_cmd->add_option("--contrast", sim_contrasts,
                                     "preset | name=c1,.. | name=truth:c1,..");
    auto* o_sl = sim_cmd->add_option("--level", sim_level, "confidence level");
    auto* o_slong = sim_cmd->add_flag("--long", sim_long, "also write per-replicate records");
    auto* o_sep = sim_cmd->add_flag("--emit-panel", sim_emit_panel,
                                    "write one simulated panel instead of running replicates");
    auto* o_sf = sim_cmd->add_option("--folds", sim_folds, "mr cross-fitting folds");
    auto* o_snu = sim_cmd->add_option("--nuisance", sim_nuisance,
                                      "mr propensity nuisance: known, fitted, constant");
    auto* o_sout = sim_cmd->add_option("--output", sim_output, "output prefix");

    // ---- contrast ---------------------------------------------------------
    auto* con_cmd = app.add_subcommand("contrast", "linear contrasts of a saved fit");
    std::string con_fit_path, con_output, con_vcov = "sandwich";
    double con_level = 0.95;
    std::vector<std::string> con_contrasts;
    auto* o_ki = con_cmd->add_option("--fit", con_fit_path, "fit JSON produced by a fit command");
    auto* o_kc = con_cmd->add_option("--contrast", con_contrasts,
                                     "preset (blip|dissipation|dose) or name=c1,c2,...");
    auto* o_kv = con_cmd->add_option("--vcov", con_vcov, "vcov for the intervals");
    auto* o_kl = con_cmd->add_option("--level", con_level, "confidence level");
    auto* o_kout = con_cmd->add_option("--output", con_output, "output prefix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("config", e.what());
        return 2;
    }

    try {
        json cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        fallback(cfg, opt_threads, "threads", threads);
        int workers = resolve_threads(threads);

        if (fit_cmd->parsed()) {
            fallback(cfg, o_fi, "input", fit_panel.input);
            fallback(cfg, o_fe, "expanded", fit_expanded);
            fallback(cfg, o_fm, "model", fit_model_path);
            fallback(cfg, o_fl, "link", fit_link);
            fallback(cfg, o_fg, "gamma", fit_gamma);
            fallback(cfg, o_fd, "max_dose", fit_max_dose);
            fallback(cfg, o_fo, "observed_only", fit_observed_only);
            fallback(cfg, o_fdel, "delimiter", fit_panel.delimiter);
            fallback(cfg, o_feps, "epsilon", fit_panel.epsilon);
            fallback(cfg, o_fb, "baseline_columns", fit_panel.baseline);
            fallback(cfg, o_fcp, "constant_pi", fit_const_pi);
            fallback(cfg, o_fmod, "modifiers", fit_modifiers);
            fallback(cfg, o_fv, "vcov", fit_vcovs);
            fallback(cfg, o_fc, "contrasts", fit_contrasts);
            fallback(cfg, o_fcv, "ci_vcov", fit_ci_vcov);
            fallback(cfg, o_flv, "level", fit_level);
            fallback(cfg, o_ft, "tol", fit_tol);
            fallback(cfg, o_fmi, "max_iter", fit_max_iter);
            fallback(cfg, o_fout, "output", fit_output);
            fit_panel.constant_pi = fit_const_pi;
            if (fit_output.empty()) throw ConfigError("--output is required");
            if (fit_panel.input.empty()) throw ConfigError("--input is required");

            WorkingModel model = resolve_model(fit_model_path, fit_gamma, fit_link);
            DesignMatrix design;
            if (fit_expanded) {
                require_file(fit_panel.input);
                std::ifstream in(fit_panel.input);
                ExpandedTable table = read_expanded(in, resolve_delimiter(fit_panel.delimiter));
                design = build_design(table, model);
            } else {
                Panel panel = fit_panel.load();
                std::vector<std::string> modifiers = fit_modifiers;
                for (const auto& f : model.features)
                    if (f.kind == Feature::Kind::modifier &&
                        std::find(modifiers.begin(), modifiers.end(), f.name) == modifiers.end())
                        modifiers.push_back(f.name);
                RegimeSet regimes = enumerate_regimes(
                    fit_gamma,
                    fit_max_dose >= 0 ? std::optional<int>(fit_max_dose) : std::nullopt);
                ExpandOptions eopts;
                eopts.observed_only = fit_observed_only;
                eopts.threads = workers;
                ExpandedTable table = expand_panel(panel, regimes, modifiers, eopts);
                design = build_design(table, model);
            }
            SolveOptions sopts;
            sopts.tol = fit_tol;
            sopts.max_iter = fit_max_iter;
            sopts.vcov_names = fit_vcovs;
            sopts.threads = workers;
            FitResult fit = solve_beta(design, model, sopts);

            json resolved = fit_panel.echo();
            resolved["expanded"] = fit_expanded;
            resolved["model"] = json::parse(model.to_json());
            resolved["gamma"] = fit_gamma;
            resolved["max_dose"] = fit_max_dose;
            resolved["observed_only"] = fit_observed_only;
            resolved["vcov"] = fit_vcovs;
            resolved["contrasts"] = fit_contrasts;
            resolved["ci_vcov"] = fit_ci_vcov;
            resolved["level"] = fit_level;
            resolved["tol"] = fit_tol;
            resolved["max_iter"] = fit_max_iter;
            resolved["modifiers"] = fit_modifiers;
            resolved["threads"] = workers;

            std::vector<std::string> outputs;
            atomic_write(fit_output + ".fit.json", fit.to_json() + "\n");
            outputs.push_back(fit_output + ".fit.json");
            atomic_write(fit_output + ".coef.csv", coefficient_table(fit, fit_vcovs));
            outputs.push_back(fit_output + ".coef.csv");
            if (!fit_contrasts.empty()) {
                std::vector<std::pair<std::string, Eigen::VectorXd>> cs;
                for (const auto& text : fit_contrasts) {
                    ContrastRequest req = parse_contrast(text);
                    if (req.preset)
                        for (auto& pc : expand_preset(*req.preset, fit.q())) cs.push_back(pc);
                    else
                        cs.push_back({req.name, *req.c});
                }
                atomic_write(fit_output + ".contrasts.csv",
                             contrast_table(fit, cs, fit_level, fit_ci_vcov));
                outputs.push_back(fit_output + ".contrasts.csv");
            }
            if (!fit.converged)
                throw NumericError("NoConvergence: residual " +
                                   format_double(fit.residual_norm) + " after " +
                                   std::to_string(fit.iterations) + " iterations");
            write_manifest(fit_output, manifest_skeleton("fit", resolved), outputs);
            return 0;
        }

        if (mr_cmd->parsed()) {
            fallback(cfg, o_mi, "input", mr_panel.input);
            fallback(cfg, o_mm, "model", mr_model_path);
            fallback(cfg, o_ml, "link", mr_link);
            fallback(cfg, o_mf, "folds", mr_folds);
            fallback(cfg, o_ms, "seed", mr_seed);
            fallback(cfg, o_mn, "nuisance", mr_nuisance);
            fallback(cfg, o_mc, "constant_pi_hat", mr_constant_pi_hat);
            fallback(cfg, o_mcov, "nuisance_covariates", mr_covariates);
            fallback(cfg, o_md, "max_dose", mr_max_dose);
            fallback(cfg, o_mdel, "delimiter", mr_panel.delimiter);
            fallback(cfg, o_meps, "epsilon", mr_panel.epsilon);
            fallback(cfg, o_mb, "baseline_columns", mr_panel.baseline);
            fallback(cfg, o_mcp, "constant_pi", mr_const_pi);
            fallback(cfg, o_mv, "vcov", mr_vcovs);
            fallback(cfg, o_mct, "contrasts", mr_contrasts);
            fallback(cfg, o_mlv, "level", mr_level);
            fallback(cfg, o_mout, "output", mr_output);
            mr_panel.constant_pi = mr_const_pi;
            if (mr_output.empty()) throw ConfigError("--output is required");
            if (mr_panel.input.empty()) throw ConfigError("--input is required");

            Panel panel = mr_panel.load();
            WorkingModel model = resolve_model(mr_model_path, 2, mr_link);
            MrOptions opts;
            opts.plan.folds = mr_folds;
            opts.plan.seed = mr_seed;
            if (mr_nuisance == "known")
                opts.nuisances.propensity = PropensityMode::known;
            else if (mr_nuisance == "fitted")
                opts.nuisances.propensity = PropensityMode::fitted;
            else if (mr_nuisance == "constant") {
                opts.nuisances.propensity = PropensityMode::constant;
                opts.nuisances.constant_pi = mr_constant_pi_hat;
            } else
                throw ConfigError("--nuisance must be known, fitted, or constant");
            opts.nuisances.covariates = mr_covariates;
            opts.nuisances.epsilon = mr_panel.epsilon;
            if (mr_max_dose >= 0) opts.max_dose = mr_max_dose;
            opts.solve.vcov_names = mr_vcovs;
            opts.solve.threads = workers;
            MrFit mr = solve_mr(panel, model, 2, opts);

            json resolved = mr_panel.echo();
            resolved["model"] = json::parse(model.to_json());
            resolved["folds"] = mr_folds;
            resolved["seed"] = mr_seed;
            resolved["nuisance"] = mr_nuisance;
            resolved["constant_pi_hat"] = mr_constant_pi_hat;
            resolved["nuisance_covariates"] = mr_covariates;
            resolved["max_dose"] = mr_max_dose;
            resolved["vcov"] = mr_vcovs;
            resolved["level"] = mr_level;
            resolved["threads"] = workers;

            std::vector<std::string> outputs;
            atomic_write(mr_output + ".fit.json", mr.fit.to_json() + "\n");
            outputs.push_back(mr_output + ".fit.json");
            atomic_write(mr_output + ".coef.csv", coefficient_table(mr.fit, mr_vcovs));
            outputs.push_back(mr_output + ".coef.csv");

            json diag;
            diag["fold_of_subject"] = mr.fold_of_subject;
            diag["folds"] = json::array();
            for (const auto& d : mr.fold_diagnostics) {
                json fj;
                fj["outcome_coefficients"] = std::vector<double>(
                    d.outcome_coefficients.data(),
                    d.outcome_coefficients.data() + d.outcome_coefficients.size());
                for (int j = 0; j < 2; ++j)
                    fj["b2_coefficients"].push_back(std::vector<double>(
                        d.b2_coefficients[j].data(),
                        d.b2_coefficients[j].data() + d.b2_coefficients[j].size()));
                fj["propensity_coefficients"] = std::vector<double>(
                    d.propensity_coefficients.data(),
                    d.propensity_coefficients.data() + d.propensity_coefficients.size());
                fj["propensity_clamped"] = d.propensity_clamped;
                fj["propensity_evaluations"] = d.propensity_evaluations;
                diag["folds"].push_back(fj);
            }
            atomic_write(mr_output + ".nuisance.json", diag.dump(2) + "\n");
            outputs.push_back(mr_output + ".nuisance.json");
            if (!mr_contrasts.empty()) {
                std::vector<std::pair<std::string, Eigen::VectorXd>> cs;
                for (const auto& text : mr_contrasts) {
                    ContrastRequest req = parse_contrast(text);
                    if (req.preset)
                        for (auto& pc : expand_preset(*req.preset, mr.fit.q())) cs.push_back(pc);
                    else
                        cs.push_back({req.name, *req.c});
                }
                atomic_write(mr_output + ".contrasts.csv",
                             contrast_table(mr.fit, cs, mr_level, "sandwich"));
                outputs.push_back(mr_output + ".contrasts.csv");
            }
            write_manifest(mr_output, manifest_skeleton("fit-mr", resolved), outputs);
            return 0;
        }

        if (cond_cmd->parsed()) {
            fallback(cfg, o_ci, "input", cond_panel.input);
            fallback(cfg, o_cm, "model", cond_model_path);
            fallback(cfg, o_cl, "link", cond_link);
            fallback(cfg, o_cdel, "delimiter", cond_panel.delimiter);
            fallback(cfg, o_ceps, "epsilon", cond_panel.epsilon);
            fallback(cfg, o_cb, "baseline_columns", cond_panel.baseline);
            fallback(cfg, o_ccp, "constant_pi", cond_const_pi);
            fallback(cfg, o_cv, "vcov", cond_vcovs);
            fallback(cfg, o_cct, "contrasts", cond_contrasts);
            fallback(cfg, o_clv, "level", cond_level);
            fallback(cfg, o_cout, "output", cond_output);
            cond_panel.constant_pi = cond_const_pi;
            if (cond_output.empty()) throw ConfigError("--output is required");
            if (cond_panel.input.empty()) throw ConfigError("--input is required");

            Panel panel = cond_panel.load();
            WorkingModel model;
            if (!cond_model_path.empty()) {
                model = WorkingModel::from_json(slurp(cond_model_path));
            } else {
                model.link = link_from_name(cond_link);
                model.features.push_back({});
                Feature tr;
                tr.kind = Feature::Kind::treatment;
                model.features.push_back(tr);
            }
            SolveOptions sopts;
            sopts.vcov_names = cond_vcovs;
            sopts.threads = workers;
            FitResult fit = availability_conditional_fit(panel, model, sopts);

            json resolved = cond_panel.echo();
            resolved["model"] = json::parse(model.to_json());
            resolved["vcov"] = cond_vcovs;
            resolved["level"] = cond_level;
            resolved["threads"] = workers;

            std::vector<std::string> outputs;
            atomic_write(cond_output + ".fit.json", fit.to_json() + "\n");
            outputs.push_back(cond_output + ".fit.json");
            atomic_write(cond_output + ".coef.csv", coefficient_table(fit, cond_vcovs));
            outputs.push_back(cond_output + ".coef.csv");
            if (!cond_contrasts.empty()) {
                std::vector<std::pair<std::string, Eigen::VectorXd>> cs;
                for (const auto& text : cond_contrasts) {
                    ContrastRequest req = parse_contrast(text);
                    if (!req.c)
                        throw ConfigError(
                            "fit-conditional contrasts must be explicit name=c1,c2,... vectors");
                    cs.push_back({req.name, *req.c});
                }
                atomic_write(cond_output + ".contrasts.csv",
                             contrast_table(fit, cs, cond_level, "sandwich"));
                outputs.push_back(cond_output + ".contrasts.csv");
            }
            if (!fit.converged)
                throw NumericError("NoConvergence: residual " +
                                   format_double(fit.residual_norm));
            write_manifest(cond_output, manifest_skeleton("fit-conditional", resolved), outputs);
            return 0;
        }

        if (expand_cmd->parsed()) {
            fallback(cfg, o_ei, "input", exp_panel.input);
            fallback(cfg, o_eg, "gamma", exp_gamma);
            fallback(cfg, o_ed, "max_dose", exp_max_dose);
            fallback(cfg, o_eo, "observed_only", exp_observed_only);
            fallback(cfg, o_em, "modifiers", exp_modifiers);
            fallback(cfg, o_ew, "warn_weight_above", exp_weight_warn);
            fallback(cfg, o_edel, "delimiter", exp_panel.delimiter);
            fallback(cfg, o_eeps, "epsilon", exp_panel.epsilon);
            fallback(cfg, o_eb, "baseline_columns", exp_panel.baseline);
            fallback(cfg, o_ecp, "constant_pi", exp_const_pi);
            fallback(cfg, o_eout, "output", exp_output);
            exp_panel.constant_pi = exp_const_pi;
            if (exp_output.empty()) throw ConfigError("--output is required");
            if (exp_panel.input.empty()) throw ConfigError("--input is required");

            Panel panel = exp_panel.load();
            RegimeSet regimes = enumerate_regimes(
                exp_gamma, exp_max_dose >= 0 ? std::optional<int>(exp_max_dose) : std::nullopt);
            ExpandOptions eopts;
            eopts.observed_only = exp_observed_only;
            eopts.weight_warn_threshold = exp_weight_warn;
            eopts.threads = workers;
            ExpandedTable table = expand_panel(panel, regimes, exp_modifiers, eopts);
            if (table.weight_warnings > 0)
                std::cerr << "{\"warning\":\"" << table.weight_warnings
                          << " weights above the diagnostic threshold\"}\n";

            json resolved = exp_panel.echo();
            resolved["gamma"] = exp_gamma;
            resolved["max_dose"] = exp_max_dose;
            resolved["observed_only"] = exp_observed_only;
            resolved["modifiers"] = exp_modifiers;
            if (exp_weight_warn) resolved["warn_weight_above"] = *exp_weight_warn;
            resolved["threads"] = workers;

            atomic_write(exp_output + ".expanded.csv", write_expanded_string(table));
            write_manifest(exp_output, manifest_skeleton("expand", resolved),
                           {exp_output + ".expanded.csv"});
            return 0;
        }

        if (sim_cmd->parsed()) {
            fallback(cfg, o_ss, "scenario", sim_scenario);
            fallback(cfg, o_sn, "n", sim_n);
            fallback(cfg, o_sT, "T", sim_T);
            fallback(cfg, o_sr, "reps", sim_reps);
            fallback(cfg, o_se, "estimator", sim_estimator);
            fallback(cfg, o_sa, "alpha", sim_alpha);
            fallback(cfg, o_ssig, "sigma", sim_sigma);
            fallback(cfg, o_sg, "gamma_coefs", sim_gamma_coefs);
            fallback(cfg, o_sg0, "gamma0", sim_gamma0);
            fallback(cfg, o_saf, "active_fraction", sim_active_fraction);
            fallback(cfg, o_ssd, "seed", sim_seed);
            fallback(cfg, o_sw, "gamma", sim_gamma);
            fallback(cfg, o_sd, "max_dose", sim_max_dose);
            fallback(cfg, o_sv, "vcov", sim_vcovs);
            fallback(cfg, o_sc, "contrasts", sim_contrasts);
            fallback(cfg, o_sl, "level", sim_level);
            fallback(cfg, o_slong, "long", sim_long);
            fallback(cfg, o_sep, "emit_panel", sim_emit_panel);
            fallback(cfg, o_sf, "folds", sim_folds);
            fallback(cfg, o_snu, "nuisance", sim_nuisance);
            fallback(cfg, o_sout, "output", sim_output);
            if (sim_output.empty()) throw ConfigError("--output is required");

            SimScenario scenario;
            if (sim_scenario == "closed-loop")
                scenario.kind = SimScenario::Kind::closed_loop_main;
            else if (sim_scenario == "feedback")
                scenario.kind = SimScenario::Kind::feedback_cancel;
            else
                throw ConfigError("--scenario must be closed-loop or feedback");
            scenario.n = sim_n;
            scenario.T = sim_T;
            scenario.seed = sim_seed;
            auto alpha = parse_doubles(sim_alpha, "--alpha");
            if (alpha.size() != 4) throw ConfigError("--alpha needs 4 values");
            std::copy(alpha.begin(), alpha.end(), scenario.closed_loop.alpha.begin());
            scenario.closed_loop.sigma = sim_sigma;
            auto gcoef = parse_doubles(sim_gamma_coefs, "--gamma-coefs");
            if (gcoef.size() != 4) throw ConfigError("--gamma-coefs needs 4 values");
            std::copy(gcoef.begin(), gcoef.end(), scenario.feedback.gamma.begin());
            scenario.feedback.gamma0 = sim_gamma0;
            scenario.feedback.active_fraction = sim_active_fraction;
            scenario.feedback.sigma = sim_sigma;

            json resolved;
            resolved["scenario"] = sim_scenario;
            resolved["n"] = sim_n;
            resolved["T"] = sim_T;
            resolved["reps"] = sim_reps;
            resolved["estimator"] = sim_estimator;
            resolved["alpha"] = sim_alpha;
            resolved["sigma"] = sim_sigma;
            resolved["gamma_coefs"] = sim_gamma_coefs;
            resolved["gamma0"] = sim_gamma0;
            resolved["active_fraction"] = sim_active_fraction;
            resolved["seed"] = sim_seed;
            resolved["gamma"] = sim_gamma;
            resolved["max_dose"] = sim_max_dose;
            resolved["vcov"] = sim_vcovs;
            resolved["contrasts"] = sim_contrasts;
            resolved["level"] = sim_level;
            resolved["long"] = sim_long;
            resolved["emit_panel"] = sim_emit_panel;
            resolved["folds"] = sim_folds;
            resolved["nuisance"] = sim_nuisance;
            resolved["threads"] = workers;

            if (sim_emit_panel) {
                Panel panel = simulate_panel(scenario);
                atomic_write(sim_output + ".panel.csv", serialize_string(panel));
                write_manifest(sim_output, manifest_skeleton("simulate", resolved),
                               {sim_output + ".panel.csv"});
                return 0;
            }

            ReplicateSpec spec;
            spec.scenario = scenario;
            spec.gamma = sim_gamma;
            if (sim_max_dose >= 0) spec.max_dose = sim_max_dose;
            if (sim_estimator == "ipw")
                spec.estimator = ReplicateSpec::Estimator::ipw;
            else if (sim_estimator == "mr")
                spec.estimator = ReplicateSpec::Estimator::mr;
            else
                throw ConfigError("--estimator must be ipw or mr");
            spec.mr.plan.folds = sim_folds;
            spec.mr.plan.seed = sim_seed;
            if (sim_nuisance == "known")
                spec.mr.nuisances.propensity = PropensityMode::known;
            else if (sim_nuisance == "fitted")
                spec.mr.nuisances.propensity = PropensityMode::fitted;
            else if (sim_nuisance == "constant")
                spec.mr.nuisances.propensity = PropensityMode::constant;
            else
                throw ConfigError("--nuisance must be known, fitted, or constant");
            spec.reps = sim_reps;
            spec.level = sim_level;
            spec.vcov_names = sim_vcovs;
            spec.threads = workers;

            if (!sim_contrasts.empty()) {
                TruthReport truth = true_beta(scenario.closed_loop.alpha);
                auto preset_truth = [&](const std::string& name) {
                    if (scenario.kind != SimScenario::Kind::closed_loop_main)
                        throw ConfigError(
                            "presets carry analytic truth for the closed-loop scenario only; "
                            "use name=truth:c1,c2,... for the feedback scenario");
                    if (name == "blip") return truth.blip;
                    if (name == "dissipation") return truth.dissipation;
                    if (name == "dose_0") return truth.dose_curve[0];
                    if (name == "dose_1") return truth.dose_curve[1];
                    if (name == "dose_2") return truth.dose_curve[2];
                    throw ConfigError("no analytic truth for preset '" + name + "'");
                };
                for (const auto& text : sim_contrasts) {
                    ContrastRequest req = parse_contrast(text);
                    if (req.preset) {
                        for (auto& [name, c] : expand_preset(*req.preset, 4)) {
                            ContrastSpec cs;
                            cs.name = name;
                            cs.c = c;
                            cs.truth = preset_truth(name);
                            spec.contrasts.push_back(cs);
                        }
                    } else {
                        ContrastSpec cs;
                        cs.name = req.name;
                        cs.c = *req.c;
                        if (!req.truth)
                            throw ConfigError("simulate contrasts need a truth: name=truth:c1,..");
                        cs.truth = *req.truth;
                        spec.contrasts.push_back(cs);
                    }
                }
            }

            ReplicateReport report = run_replicates(spec);
            std::vector<std::string> outputs;
            {
                std::ostringstream out;
                write_replicate_summaries(report, out);
                atomic_write(sim_output + ".report.csv", out.str());
                outputs.push_back(sim_output + ".report.csv");
            }
            if (sim_long) {
                std::ostringstream out;
                write_replicate_records(report, out);
                atomic_write(sim_output + ".long.csv", out.str());
                outputs.push_back(sim_output + ".long.csv");
            }
            if (report.reps_failed > 0)
                std::cerr << "{\"warning\":\"" << report.reps_failed
                          << " replicates failed\"}\n";
            write_manifest(sim_output, manifest_skeleton("simulate", resolved), outputs);
            return 0;
        }

        if (con_cmd->parsed()) {
            fallback(cfg, o_ki, "fit", con_fit_path);
            fallback(cfg, o_kc, "contrasts", con_contrasts);
            fallback(cfg, o_kv, "vcov", con_vcov);
            fallback(cfg, o_kl, "level", con_level);
            fallback(cfg, o_kout, "output", con_output);
            if (con_output.empty()) throw ConfigError("--output is required");
            if (con_fit_path.empty()) throw ConfigError("--fit is required");
            if (con_contrasts.empty()) throw ConfigError("--contrast is required");

            FitResult fit = FitResult::from_json(slurp(con_fit_path));
            std::vector<std::pair<std::string, Eigen::VectorXd>> cs;
            for (const auto& text : con_contrasts) {
                ContrastRequest req = parse_contrast(text);
                if (req.preset)
                    for (auto& pc : expand_preset(*req.preset, fit.q())) cs.push_back(pc);
                else
                    cs.push_back({req.name, *req.c});
            }
            json resolved;
            resolved["fit"] = con_fit_path;
            resolved["contrasts"] = con_contrasts;
            resolved["vcov"] = con_vcov;
            resolved["level"] = con_level;

            atomic_write(con_output + ".contrasts.csv",
                         contrast_table(fit, cs, con_level, con_vcov));
            write_manifest(con_output, manifest_skeleton("contrast", resolved),
                           {con_output + ".contrasts.csv"});
            return 0;
        }

        throw ConfigError("no subcommand given");
    } catch (const Error& e) {
        const char* type = e.kind() == ErrorKind::config ? "config"
                           : e.kind() == ErrorKind::data ? "data"
                                                         : "numeric";
        print_error(type, e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return 4;
    }
}
