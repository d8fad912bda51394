#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hrmsm/msm.hpp"

namespace hrmsm {

struct SolveOptions {
    double tol = 1e-9;        // on the sup-norm of the averaged estimating function
    int max_iter = 100;
    std::optional<Eigen::VectorXd> init;
    bool force_newton = false;     // run the Newton path even for identity link
    bool fd_jacobian = false;      // finite-difference Jacobian cross-check path
    std::vector<std::string> vcov_names = {"sandwich", "CR1", "CR2", "CR3"};
    int threads = 1;
};

struct FitResult {
    Eigen::VectorXd beta;
    std::map<std::string, Eigen::MatrixXd> vcov;  // per-beta-hat scale (already / n)
    Eigen::MatrixXd A_hat;  // P_n[phi phi^T] at beta_hat
    Eigen::MatrixXd B_hat;  // P_n[grad phi] at beta_hat
    int n_subjects = 0;
    std::size_t n_rows = 0;
    bool converged = false;
    int iterations = 0;
    double residual_norm = 0.0;
    std::string link;
    std::vector<std::string> feature_names;
    std::int64_t clamp_events = 0;     // linear-predictor clamps on weighted rows
    std::int64_t leverage_clamps = 0;  // cluster leverages capped in CR2/CR3

    int q() const { return static_cast<int>(beta.size()); }
    std::string to_json() const;
    static FitResult from_json(const std::string& text);
};

// Per-subject estimating function phi(Z_i, beta) summed over the subject's
// (t, regime) rows: h * M * weight * (Y - m).
Eigen::VectorXd estimating_function(const DesignMatrix& design, const WorkingModel& model,
                                    const Eigen::VectorXd& beta, std::size_t cluster_index);

// Averaged estimating function P_n[phi] over clusters.
Eigen::VectorXd mean_estimating_function(const DesignMatrix& design, const WorkingModel& model,
                                         const Eigen::VectorXd& beta, int threads = 1);

FitResult solve_beta(const DesignMatrix& design, const WorkingModel& model,
                     const SolveOptions& opts = {});

// Robust covariances at a given beta (normally beta_hat). Returns per-beta
// matrices: sandwich = B^-1 A B^-1 / n, CR1 multiplies by n/(n-q), CR2/CR3
// rescale cluster score residuals by (I - H_c)^{-1/2} and (I - H_c)^{-1}.
struct VcovResult {
    std::map<std::string, Eigen::MatrixXd> vcov;
    Eigen::MatrixXd A_hat, B_hat;
    std::int64_t leverage_clamps = 0;
};
VcovResult sandwich_vcov(const DesignMatrix& design, const WorkingModel& model,
                         const Eigen::VectorXd& beta,
                         const std::vector<std::string>& names = {"sandwich", "CR1", "CR2",
                                                                  "CR3"},
                         int threads = 1);

struct Contrast {
    std::string name;
    Eigen::VectorXd c;
    double estimate = 0.0;
    double se = 0.0;
    double lo = 0.0, hi = 0.0;
    double p_value = 1.0;
    double level = 0.95;
    std::string vcov_name;
};

Contrast wald(const FitResult& fit, const Eigen::VectorXd& c, double level = 0.95,
              const std::string& vcov_name = "sandwich", const std::string& name = "");

double normal_quantile(double p);

// Gamma = 1 availability-conditional fit: rows restricted to I_t = 1,
// weights 1/pi_t(A_t), same inference pipeline.
FitResult availability_conditional_fit(const Panel& panel, const WorkingModel& model,
                                       const SolveOptions& opts = {});

}  // namespace hrmsm
