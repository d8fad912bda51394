#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hrmsm/panel.hpp"
#include "hrmsm/regimes.hpp"

namespace hrmsm {

enum class Link { identity, logit, log };

std::string link_name(Link link);
Link link_from_name(const std::string& name);

// Linear predictors are clamped here before exponentiation; callers count
// clamp events as a diagnostic.
constexpr double kLinearPredictorClamp = 30.0;

struct LinkEval {
    double mean = 0.0;
    double dmean = 0.0;   // dm/d(eta)
    double d2mean = 0.0;  // d2m/d(eta)^2
    bool clamped = false;
};

LinkEval eval_link(Link link, double eta);

struct Feature {
    enum class Kind {
        intercept,
        position,        // J at `lag` timepoints before the outcome (lag 0 = current)
        dose_indicator,  // 1(dose == r)
        dose_linear,
        modifier,        // named effect-modifier column
        time_linear,
        treatment,       // observed A_t; availability-conditional fits only
        interaction,     // product of two earlier features
    };
    Kind kind = Kind::intercept;
    int lag = 0;
    int r = 0;
    std::string name;
    int f1 = -1, f2 = -1;

    std::string display(const std::vector<Feature>& all) const;
};

struct HSpec {
    enum class Kind { constant_one, static_pi_absorb, table };
    Kind kind = Kind::constant_one;
    // static_pi_absorb: h(d) = prod_j pi^{J_j} (1-pi)^{1-J_j}, the open-loop
    // choice that cancels a constant randomization probability.
    double pi = 0.5;
    // table: keyed by (t, regime label); missing keys are an error.
    std::map<std::pair<std::int64_t, std::string>, double> table;
};

struct WorkingModel {
    Link link = Link::identity;
    std::vector<Feature> features;
    HSpec h;

    int q() const { return static_cast<int>(features.size()); }
    std::vector<std::string> feature_names() const;
    void validate() const;

    std::string to_json() const;
    static WorkingModel from_json(const std::string& text);
};

// Saturated model over the full regime set: all products of position
// indicators, ordered so that for gamma=2 the coefficients are
// (intercept, J[t-1], J[t], J[t-1]:J[t]).
WorkingModel make_saturated(int gamma, Link link = Link::identity);

// Rows grouped contiguously by cluster, in cluster-index order.
struct DesignMatrix {
    Eigen::MatrixXd X;   // n_rows x q
    Eigen::VectorXd y;
    Eigen::VectorXd w;   // combined weight h * ip_weight (>= 0)
    std::vector<std::int32_t> cluster;
    std::vector<std::int32_t> regime;  // -1 when not regime-based
    std::vector<std::string> cluster_ids;
    std::vector<std::string> regime_labels;
    std::vector<std::string> feature_names;

    std::size_t n_rows() const { return static_cast<std::size_t>(X.rows()); }
    std::size_t n_clusters() const { return cluster_ids.size(); }
    std::vector<std::pair<std::size_t, std::size_t>> cluster_ranges() const;
};

DesignMatrix build_design(const ExpandedTable& expanded, const WorkingModel& model);

// Availability-conditional design: one row per available (subject, t), the
// `treatment` feature bound to the observed A_t, weight 1/pi_t(A_t).
DesignMatrix build_conditional_design(const Panel& panel, const WorkingModel& model);

// Design vector a regime would receive (pure function of t, regime, and
// modifiers); used for regime-mean contrasts.
Eigen::VectorXd regime_design_vector(const WorkingModel& model, const ExpandedTable& table,
                                     std::int32_t regime_index, std::int64_t t,
                                     const std::vector<double>& modifiers = {});

}  // namespace hrmsm
