#include "hrmsm/msm.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "hrmsm/common.hpp"

namespace hrmsm {

using nlohmann::json;

std::string link_name(Link link) {
    switch (link) {
        case Link::identity: return "identity";
        case Link::logit: return "logit";
        case Link::log: return "log";
    }
    return "identity";
}

Link link_from_name(const std::string& name) {
    if (name == "identity") return Link::identity;
    if (name == "logit") return Link::logit;
    if (name == "log") return Link::log;
    throw ConfigError("unknown link '" + name + "' (expected identity, logit, or log)");
}

LinkEval eval_link(Link link, double eta) {
    LinkEval out;
    switch (link) {
        case Link::identity:
            out.mean = eta;
            out.dmean = 1.0;
            out.d2mean = 0.0;
            return out;
        case Link::logit: {
            double e = eta;
            if (e > kLinearPredictorClamp) { e = kLinearPredictorClamp; out.clamped = true; }
            if (e < -kLinearPredictorClamp) { e = -kLinearPredictorClamp; out.clamped = true; }
            double m = 1.0 / (1.0 + std::exp(-e));
            out.mean = m;
            out.dmean = m * (1.0 - m);
            out.d2mean = m * (1.0 - m) * (1.0 - 2.0 * m);
            return out;
        }
        case Link::log: {
            double e = eta;
            if (e > kLinearPredictorClamp) { e = kLinearPredictorClamp; out.clamped = true; }
            if (e < -kLinearPredictorClamp) { e = -kLinearPredictorClamp; out.clamped = true; }
            double m = std::exp(e);
            out.mean = m;
            out.dmean = m;
            out.d2mean = m;
            return out;
        }
    }
    return out;
}

std::string Feature::display(const std::vector<Feature>& all) const {
    switch (kind) {
        case Kind::intercept: return "(Intercept)";
        case Kind::position: return lag == 0 ? "J[t]" : "J[t-" + std::to_string(lag) + "]";
        case Kind::dose_indicator: return "dose==" + std::to_string(r);
        case Kind::dose_linear: return "dose";
        case Kind::modifier: return name;
        case Kind::time_linear: return "t";
        case Kind::treatment: return "a[t]";
        case Kind::interaction:
            return all[static_cast<std::size_t>(f1)].display(all) + ":" +
                   all[static_cast<std::size_t>(f2)].display(all);
    }
    return "?";
}

std::vector<std::string> WorkingModel::feature_names() const {
    std::vector<std::string> names;
    for (const auto& f : features) names.push_back(f.display(features));
    return names;
}

void WorkingModel::validate() const {
    if (features.empty()) throw ConfigError("model needs at least one feature");
    for (std::size_t i = 0; i < features.size(); ++i) {
        const Feature& f = features[i];
        if (f.kind == Feature::Kind::interaction) {
            if (f.f1 < 0 || f.f2 < 0 || f.f1 >= static_cast<int>(i) ||
                f.f2 >= static_cast<int>(i))
                throw ConfigError("interaction operands must reference earlier features");
        }
        if (f.kind == Feature::Kind::position && f.lag < 0)
            throw ConfigError("position lag must be >= 0");
        if (f.kind == Feature::Kind::dose_indicator && f.r < 0)
            throw ConfigError("dose_indicator level must be >= 0");
    }
    if (h.kind == HSpec::Kind::table)
        for (const auto& [key, value] : h.table)
            if (value < 0.0) throw ConfigError("h table values must be non-negative");
    if (h.kind == HSpec::Kind::static_pi_absorb && (h.pi <= 0.0 || h.pi >= 1.0))
        throw ConfigError("static_pi_absorb needs pi in (0,1)");
}

static json feature_to_json(const Feature& f) {
    json j;
    switch (f.kind) {
        case Feature::Kind::intercept: j["kind"] = "intercept"; break;
        case Feature::Kind::position: j["kind"] = "position"; j["lag"] = f.lag; break;
        case Feature::Kind::dose_indicator: j["kind"] = "dose_indicator"; j["r"] = f.r; break;
        case Feature::Kind::dose_linear: j["kind"] = "dose_linear"; break;
        case Feature::Kind::modifier: j["kind"] = "modifier"; j["name"] = f.name; break;
        case Feature::Kind::time_linear: j["kind"] = "time_linear"; break;
        case Feature::Kind::treatment: j["kind"] = "treatment"; break;
        case Feature::Kind::interaction:
            j["kind"] = "interaction"; j["f1"] = f.f1; j["f2"] = f.f2; break;
    }
    return j;
}

static Feature feature_from_json(const json& j) {
    Feature f;
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "intercept") f.kind = Feature::Kind::intercept;
    else if (kind == "position") { f.kind = Feature::Kind::position; f.lag = j.at("lag").get<int>(); }
    else if (kind == "dose_indicator") { f.kind = Feature::Kind::dose_indicator; f.r = j.at("r").get<int>(); }
    else if (kind == "dose_linear") f.kind = Feature::Kind::dose_linear;
    else if (kind == "modifier") { f.kind = Feature::Kind::modifier; f.name = j.at("name").get<std::string>(); }
    else if (kind == "time_linear") f.kind = Feature::Kind::time_linear;
    else if (kind == "treatment") f.kind = Feature::Kind::treatment;
    else if (kind == "interaction") {
        f.kind = Feature::Kind::interaction;
        f.f1 = j.at("f1").get<int>();
        f.f2 = j.at("f2").get<int>();
    } else
        throw ConfigError("unknown feature kind '" + kind + "'");
    return f;
}

std::string WorkingModel::to_json() const {
    json j;
    j["link"] = link_name(link);
    j["features"] = json::array();
    for (const auto& f : features) j["features"].push_back(feature_to_json(f));
    switch (h.kind) {
        case HSpec::Kind::constant_one: j["h"] = {{"kind", "constant_one"}}; break;
        case HSpec::Kind::static_pi_absorb:
            j["h"] = {{"kind", "static_pi_absorb"}, {"pi", h.pi}};
            break;
        case HSpec::Kind::table: {
            json entries = json::array();
            for (const auto& [key, value] : h.table)
                entries.push_back({{"t", key.first}, {"regime", key.second}, {"value", value}});
            j["h"] = {{"kind", "table"}, {"entries", entries}};
            break;
        }
    }
    return j.dump(2);
}

WorkingModel WorkingModel::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("ConfigParse: model spec is not valid JSON: ") + e.what());
    }
    WorkingModel model;
    try {
        model.link = link_from_name(j.at("link").get<std::string>());
        for (const auto& fj : j.at("features")) model.features.push_back(feature_from_json(fj));
        if (j.contains("h")) {
            std::string kind = j["h"].at("kind").get<std::string>();
            if (kind == "constant_one") model.h.kind = HSpec::Kind::constant_one;
            else if (kind == "static_pi_absorb") {
                model.h.kind = HSpec::Kind::static_pi_absorb;
                model.h.pi = j["h"].at("pi").get<double>();
            } else if (kind == "table") {
                model.h.kind = HSpec::Kind::table;
                for (const auto& entry : j["h"].at("entries"))
                    model.h.table[{entry.at("t").get<std::int64_t>(),
                                   entry.at("regime").get<std::string>()}] =
                        entry.at("value").get<double>();
            } else
                throw ConfigError("unknown h kind '" + kind + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("ConfigParse: model spec: ") + e.what());
    }
    model.validate();
    return model;
}

WorkingModel make_saturated(int gamma, Link link) {
    if (gamma < 1 || gamma > 16) throw ConfigError("saturated model needs gamma in [1,16]");
    WorkingModel model;
    model.link = link;
    // Subsets of window positions in binary order, bit p = position p
    // (earliest first): {} , {p0}, {p1}, {p0,p1}, ...
    std::vector<int> subset_feature(static_cast<std::size_t>(1) << gamma, -1);
    for (std::uint32_t subset = 0; subset < (1u << gamma); ++subset) {
        Feature f;
        if (subset == 0) {
            f.kind = Feature::Kind::intercept;
        } else if ((subset & (subset - 1)) == 0) {
            int p = 0;
            while (!((subset >> p) & 1u)) ++p;
            f.kind = Feature::Kind::position;
            f.lag = gamma - 1 - p;
        } else {
            std::uint32_t low = subset & (~subset + 1u);  // lowest set bit
            f.kind = Feature::Kind::interaction;
            f.f1 = subset_feature[low];
            f.f2 = subset_feature[subset & ~low];
        }
        subset_feature[subset] = static_cast<int>(model.features.size());
        model.features.push_back(f);
    }
    return model;
}

static double h_value(const HSpec& h, std::int64_t t, const std::string& regime_label,
                      std::uint32_t mask, int gamma) {
    switch (h.kind) {
        case HSpec::Kind::constant_one: return 1.0;
        case HSpec::Kind::static_pi_absorb: {
            double v = 1.0;
            for (int p = 0; p < gamma; ++p)
                v *= ((mask >> p) & 1u) ? h.pi : 1.0 - h.pi;
            return v;
        }
        case HSpec::Kind::table: {
            auto it = h.table.find({t, regime_label});
            if (it == h.table.end())
                throw DataError("h table has no entry for (t=" + std::to_string(t) +
                                ", regime=" + regime_label + ")");
            return it->second;
        }
    }
    return 1.0;
}

namespace {

struct FeaturePlan {
    const WorkingModel* model;
    std::vector<int> modifier_slot;  // per feature: index into row modifiers
    int gamma;

    void fill(Eigen::RowVectorXd& x, std::uint32_t mask, double dose, std::int64_t t,
              const std::vector<double>& modifiers, double treatment) const {
        const auto& feats = model->features;
        for (std::size_t i = 0; i < feats.size(); ++i) {
            const Feature& f = feats[i];
            double v = 0.0;
            switch (f.kind) {
                case Feature::Kind::intercept: v = 1.0; break;
                case Feature::Kind::position: {
                    int p = gamma - 1 - f.lag;
                    if (p < 0)
                        throw ConfigError("position lag " + std::to_string(f.lag) +
                                          " exceeds window length " + std::to_string(gamma));
                    v = (mask >> p) & 1u ? 1.0 : 0.0;
                    break;
                }
                case Feature::Kind::dose_indicator: v = dose == f.r ? 1.0 : 0.0; break;
                case Feature::Kind::dose_linear: v = dose; break;
                case Feature::Kind::modifier:
                    v = modifiers[static_cast<std::size_t>(modifier_slot[i])];
                    break;
                case Feature::Kind::time_linear: v = static_cast<double>(t); break;
                case Feature::Kind::treatment: v = treatment; break;
                case Feature::Kind::interaction:
                    v = x[f.f1] * x[f.f2];
                    break;
            }
            if (!std::isfinite(v))
                throw DataError("NonFiniteFeature: feature '" + f.display(feats) + "'");
            x[static_cast<Eigen::Index>(i)] = v;
        }
    }
};

FeaturePlan plan_features(const WorkingModel& model, const std::vector<std::string>& modifier_names,
                          int gamma, bool allow_treatment) {
    model.validate();
    FeaturePlan plan{&model, std::vector<int>(model.features.size(), -1), gamma};
    for (std::size_t i = 0; i < model.features.size(); ++i) {
        const Feature& f = model.features[i];
        if (f.kind == Feature::Kind::modifier) {
            auto it = std::find(modifier_names.begin(), modifier_names.end(), f.name);
            if (it == modifier_names.end())
                throw DataError("UnknownModifier: model references '" + f.name + "'");
            plan.modifier_slot[i] = static_cast<int>(it - modifier_names.begin());
        }
        if (f.kind == Feature::Kind::treatment && !allow_treatment)
            throw ConfigError(
                "treatment features are for availability-conditional fits; use position "
                "indicators in regime models");
        if ((f.kind == Feature::Kind::position || f.kind == Feature::Kind::dose_indicator ||
             f.kind == Feature::Kind::dose_linear) &&
            allow_treatment)
            throw ConfigError(
                "regime features are not defined for availability-conditional fits");
    }
    return plan;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> DesignMatrix::cluster_ranges() const {
    std::vector<std::pair<std::size_t, std::size_t>> ranges(cluster_ids.size(), {0, 0});
    std::size_t i = 0;
    std::size_t n = n_rows();
    while (i < n) {
        std::size_t j = i;
        while (j < n && cluster[j] == cluster[i]) ++j;
        ranges[static_cast<std::size_t>(cluster[i])] = {i, j};
        i = j;
    }
    return ranges;
}

DesignMatrix build_design(const ExpandedTable& expanded, const WorkingModel& model) {
    FeaturePlan plan = plan_features(model, expanded.modifier_names, expanded.gamma, false);
    DesignMatrix d;
    const Eigen::Index n = static_cast<Eigen::Index>(expanded.rows.size());
    const Eigen::Index q = model.q();
    d.X.resize(n, q);
    d.y.resize(n);
    d.w.resize(n);
    d.cluster.resize(expanded.rows.size());
    d.regime.resize(expanded.rows.size());
    d.cluster_ids = expanded.subject_ids;
    d.regime_labels = expanded.regime_labels;
    d.feature_names = model.feature_names();
    Eigen::RowVectorXd xbuf(q);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = expanded.rows[static_cast<std::size_t>(i)];
        const std::string& rlabel = expanded.regime_labels[static_cast<std::size_t>(row.regime)];
        plan.fill(xbuf, row.treat_mask, row.dose, row.t, row.modifiers, 0.0);
        d.X.row(i) = xbuf;
        d.y[i] = row.outcome;
        double h = h_value(model.h, row.t, rlabel, row.treat_mask, expanded.gamma);
        d.w[i] = h * row.weight;
        d.cluster[static_cast<std::size_t>(i)] = row.subject;
        d.regime[static_cast<std::size_t>(i)] = row.regime;
    }
    return d;
}

DesignMatrix build_conditional_design(const Panel& panel, const WorkingModel& model) {
    // Modifiers resolve against covariates at the same t, then baseline.
    std::vector<std::string> modifier_names;
    for (const auto& f : model.features)
        if (f.kind == Feature::Kind::modifier) modifier_names.push_back(f.name);
    FeaturePlan plan = plan_features(model, modifier_names, 1, true);

    struct ModifierRef {
        bool from_baseline;
        int index;
    };
    std::vector<ModifierRef> refs;
    for (const auto& name : modifier_names) {
        int ci = panel.covariate_index(name);
        if (ci >= 0) { refs.push_back({false, ci}); continue; }
        int bi = panel.baseline_index(name);
        if (bi >= 0) { refs.push_back({true, bi}); continue; }
        throw DataError("UnknownModifier: '" + name + "'");
    }

    std::size_t n_avail = 0;
    for (const auto& s : panel.subjects())
        for (const auto& r : s.records)
            if (r.availability == 1) ++n_avail;
    if (n_avail == 0) throw DataError("EmptyCell: no available (I=1) rows in panel");

    DesignMatrix d;
    d.X.resize(static_cast<Eigen::Index>(n_avail), model.q());
    d.y.resize(static_cast<Eigen::Index>(n_avail));
    d.w.resize(static_cast<Eigen::Index>(n_avail));
    d.cluster.resize(n_avail);
    d.regime.assign(n_avail, -1);
    d.feature_names = model.feature_names();
    for (const auto& s : panel.subjects()) d.cluster_ids.push_back(s.id);

    Eigen::Index i = 0;
    Eigen::RowVectorXd xbuf(model.q());
    std::vector<double> mods(refs.size());
    for (std::size_t si = 0; si < panel.n_subjects(); ++si) {
        const SubjectBlock& s = panel.subject(si);
        for (const auto& r : s.records) {
            if (r.availability != 1) continue;
            for (std::size_t k = 0; k < refs.size(); ++k)
                mods[k] = refs[k].from_baseline
                              ? s.baseline[static_cast<std::size_t>(refs[k].index)]
                              : r.covariates[static_cast<std::size_t>(refs[k].index)];
            plan.fill(xbuf, 0, 0.0, r.t, mods, static_cast<double>(r.treatment));
            d.X.row(i) = xbuf;
            d.y[i] = r.outcome;
            double p_obs = r.treatment ? r.propensity : 1.0 - r.propensity;
            if (p_obs <= 0.0)
                throw DataError("DegeneratePropensity: subject '" + s.id + "' t=" +
                                std::to_string(r.t));
            d.w[i] = 1.0 / p_obs;
            d.cluster[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(si);
            ++i;
        }
    }
    return d;
}

Eigen::VectorXd regime_design_vector(const WorkingModel& model, const ExpandedTable& table,
                                     std::int32_t regime_index, std::int64_t t,
                                     const std::vector<double>& modifiers) {
    FeaturePlan plan = plan_features(model, table.modifier_names, table.gamma, false);
    const std::string& label = table.regime_labels[static_cast<std::size_t>(regime_index)];
    RegimeSequence seq = RegimeSequence::from_label(label);
    Eigen::RowVectorXd x(model.q());
    plan.fill(x, seq.mask(), static_cast<double>(seq.dose()), t, modifiers, 0.0);
    return x.transpose();
}

}  // namespace hrmsm
