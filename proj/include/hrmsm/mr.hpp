#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hrmsm/estimator.hpp"
#include "hrmsm/msm.hpp"
#include "hrmsm/panel.hpp"

namespace hrmsm {

using Predictor = std::function<double(const Eigen::RowVectorXd&)>;

struct LearnerResult {
    Predictor predict;
    Eigen::VectorXd coefficients;
};

// Sealed plug-in surface: (feature rows, targets) -> prediction function.
class Learner {
  public:
    virtual ~Learner() = default;
    virtual LearnerResult fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) const = 0;
};

class LinearLearner : public Learner {
  public:
    LearnerResult fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) const override;
};

class LogisticLearner : public Learner {
  public:
    LearnerResult fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) const override;
};

enum class PropensityMode {
    known,     // use the panel's propensity column
    fitted,    // logistic regression of A_t on current covariates among I=1
    constant,  // pi_hat(1) == constant_pi everywhere, availability ignored
};

struct NuisanceSpec {
    std::shared_ptr<Learner> outcome_learner = std::make_shared<LinearLearner>();
    std::shared_ptr<Learner> propensity_learner = std::make_shared<LogisticLearner>();
    PropensityMode propensity = PropensityMode::known;
    double constant_pi = 0.5;
    bool zero_outcome_model = false;  // b1 = b2 = 0
    std::vector<std::string> covariates;  // empty -> all panel covariates
    double epsilon = 0.01;                // clamp for fitted propensities
};

struct NuisanceDiagnostics {
    Eigen::VectorXd outcome_coefficients;
    std::array<Eigen::VectorXd, 2> b2_coefficients;
    Eigen::VectorXd propensity_coefficients;
    std::size_t propensity_clamped = 0;
    std::size_t propensity_evaluations = 0;
};

// Sequential-regression nuisances for Gamma=2: b1^{d_t}(H_t) regressed from
// the observed outcome, b2^{d_{t-1},d_t}(H_{t-1}) regressed from b1
// predictions (never from raw Y), plus a propensity model.
struct NuisanceSet {
    // b1(j, prev, cur) = predicted E[Y_t | H_t, A_t = j * I_t]
    std::function<double(int, const TrajectoryRecord&, const TrajectoryRecord&)> b1;
    // b2(j1, j2, prev) = predicted E[b1^{j2}(H_t) | H_{t-1}, A_{t-1} = j1 * I_{t-1}]
    std::function<double(int, int, const TrajectoryRecord&)> b2;
    // Probability of the observed treatment under the (possibly wrong) model.
    std::function<double(const TrajectoryRecord&)> pi_obs;
    std::shared_ptr<NuisanceDiagnostics> diagnostics;
};

// Fit on the given training subjects (all subjects when empty).
NuisanceSet fit_nuisances(const Panel& panel, const NuisanceSpec& spec,
                          const std::vector<std::size_t>& training_subjects = {});

struct CrossFitPlan {
    int folds = 2;
    std::uint64_t seed = 1;
};

// Deterministic shuffle-then-round-robin partition of subjects.
std::vector<int> fold_assignment(std::size_t n_subjects, const CrossFitPlan& plan);

struct MrOptions {
    CrossFitPlan plan;
    NuisanceSpec nuisances;
    SolveOptions solve;
    std::optional<int> max_dose;
};

// Influence-function pseudo rows: the multiply-robust estimating equation is
// the plain h-weighted GEE of this pseudo-outcome on the working model, so
// the point fit and plug-in variance reuse the M-estimation core.
ExpandedTable build_mr_pseudo_table(const Panel& panel, const RegimeSet& regimes,
                                    const std::vector<std::string>& modifier_names,
                                    const NuisanceSet& nuisances,
                                    const std::vector<int>* fold_of_subject = nullptr,
                                    const std::vector<NuisanceSet>* per_fold = nullptr);

struct MrFit {
    FitResult fit;
    std::vector<int> fold_of_subject;
    std::vector<NuisanceDiagnostics> fold_diagnostics;
};

MrFit solve_mr(const Panel& panel, const WorkingModel& model, int gamma, const MrOptions& opts);

}  // namespace hrmsm
