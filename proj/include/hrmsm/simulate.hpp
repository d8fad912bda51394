#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hrmsm/estimator.hpp"
#include "hrmsm/mr.hpp"
#include "hrmsm/panel.hpp"

namespace hrmsm {

// Closed-loop structural equations: X0 ~ Bern(1/2), A_t|X_t ~ Bern(X_t/2),
// X_t|A_{t-1} ~ Bern(0.4 + 0.4 A_{t-1}), Y_t ~ N(a1 X_{t-1} + a2 A_{t-1} +
// a3 X_t + a4 A_t, sigma^2). Availability I_t = X_t, propensity X_t/2.
struct ClosedLoopParams {
    std::array<double, 4> alpha = {0.25, 2.0, 1.75, 0.5};
    double sigma = 1.0;
};

// Two-arm feedback-cancellation design: X_t ~ Bern(0.7 - 0.5 A_{t-1} g),
// A_t ~ Bern(0.8 X_t), Y_t ~ N(g0 + g1 X_{t-1} + g2 A_{t-1} g + g3 X_t +
// g4 A_t g, sigma^2). Arm G is a baseline column.
struct FeedbackParams {
    std::array<double, 4> gamma = {1.0, 0.5, 1.0, 0.5};
    double gamma0 = 0.0;
    double active_fraction = 0.5;
    double sigma = 1.0;
};

struct SimScenario {
    enum class Kind { closed_loop_main, feedback_cancel };
    Kind kind = Kind::closed_loop_main;
    ClosedLoopParams closed_loop;
    FeedbackParams feedback;
    int n = 100;
    int T = 50;
    std::uint64_t seed = 1;
};

// Deterministic given (seed, replicate): each subject draws from its own
// counter-based stream.
Panel simulate_panel(const SimScenario& scenario, std::uint64_t replicate = 0);

struct TruthReport {
    std::array<double, 4> beta;          // saturated Gamma=2 coefficients
    double blip;                         // beta2
    double dissipation;                  // beta2 - beta1
    std::array<double, 3> dose_curve;    // (b0, b0 + (b1+b2)/2, b0+b1+b2+b3)
};

TruthReport true_beta(const std::array<double, 4>& alpha);

// Saturated Gamma=2 coefficients within arm g of the feedback scenario.
TruthReport feedback_true_beta(const FeedbackParams& params, int g);

// Stationary between-arm mean outcome difference -0.2(g1+g3) + 0.4(g2+g4).
double feedback_macro_difference(const std::array<double, 4>& gamma);

// Brute-force counterfactual: simulate the 2-timepoint closed-loop instance
// with treatment forced to the regime at both window positions and average
// Y_2. Independent of the IPW path; exercises the identification chain.
struct MonteCarloMean {
    double mean = 0.0;
    double se = 0.0;
    std::size_t draws = 0;
};
MonteCarloMean forced_regime_mean(const ClosedLoopParams& params, const RegimeSequence& seq,
                                  std::size_t draws, std::uint64_t seed);

struct ContrastSpec {
    std::string name;
    Eigen::VectorXd c;
    double truth = 0.0;
};

// The three headline estimands for the saturated Gamma=2 model.
std::vector<ContrastSpec> default_contrasts(const TruthReport& truth);

struct ReplicateSpec {
    SimScenario scenario;
    WorkingModel model;                       // defaults to saturated Gamma=2
    int gamma = 2;
    std::optional<int> max_dose;
    enum class Estimator { ipw, mr };
    Estimator estimator = Estimator::ipw;
    MrOptions mr;                             // used when estimator == mr
    int reps = 1;
    double level = 0.95;
    std::vector<std::string> vcov_names = {"sandwich", "CR1", "CR2", "CR3"};
    std::vector<ContrastSpec> contrasts;      // empty -> default three + coefficients
    int threads = 1;
};

struct ReplicateSummary {
    std::string contrast;
    std::string vcov;
    double truth = 0.0;
    double mean_estimate = 0.0;
    double bias = 0.0;             // relative when truth != 0, else absolute
    bool bias_is_relative = true;
    double empirical_sd = 0.0;
    double mean_se = 0.0;
    double coverage = 0.0;
    int reps_ok = 0;
    int reps_failed = 0;
};

struct ReplicateRecord {
    int replicate = 0;
    std::string contrast;
    std::string vcov;
    double estimate = 0.0;
    double se = 0.0;
    int covered = 0;
};

struct ReplicateReport {
    std::vector<ReplicateSummary> summaries;   // contrast x vcov
    std::vector<ReplicateRecord> records;      // long format, per replicate
    int reps_failed = 0;
    std::vector<std::string> failures;         // first few error messages
};

ReplicateReport run_replicates(const ReplicateSpec& spec);

void write_replicate_summaries(const ReplicateReport& report, std::ostream& out,
                               char delim = ',');
void write_replicate_records(const ReplicateReport& report, std::ostream& out, char delim = ',');

}  // namespace hrmsm
