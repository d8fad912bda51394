#include "hrmsm/estimator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include <nlohmann/json.hpp>

#include "hrmsm/common.hpp"
#include "hrmsm/csv.hpp"

namespace hrmsm {

using nlohmann::json;

namespace {

// Deterministic blocked-pairwise reduction: per-item contributions are
// accumulated sequentially within fixed blocks, then block sums are combined
// pairwise. Independent of thread count by construction.
template <typename Acc, typename AddItem>
Acc blocked_reduce(std::size_t n, Acc zero, const AddItem& add_item) {
    constexpr std::size_t kBlock = 256;
    std::vector<Acc> blocks;
    blocks.reserve(n / kBlock + 1);
    for (std::size_t start = 0; start < n; start += kBlock) {
        Acc acc = zero;
        std::size_t end = std::min(n, start + kBlock);
        for (std::size_t i = start; i < end; ++i) add_item(acc, i);
        blocks.push_back(std::move(acc));
    }
    if (blocks.empty()) return zero;
    while (blocks.size() > 1) {
        std::vector<Acc> next;
        next.reserve(blocks.size() / 2 + 1);
        for (std::size_t i = 0; i + 1 < blocks.size(); i += 2)
            next.push_back(blocks[i] + blocks[i + 1]);
        if (blocks.size() % 2) next.push_back(blocks.back());
        blocks = std::move(next);
    }
    return blocks[0];
}

struct ClusterPass {
    const DesignMatrix& design;
    Link link;
    const Eigen::VectorXd& beta;

    // phi_c and optionally the cluster blocks of the Jacobian and the
    // Gauss-Newton cross-product sum S_c = sum w (dm)^2 x x^T.
    void run(std::size_t lo, std::size_t hi, Eigen::VectorXd* phi, Eigen::MatrixXd* B,
             Eigen::MatrixXd* S, std::int64_t* clamps) const {
        const Eigen::Index q = design.X.cols();
        if (phi) phi->setZero(q);
        if (B) B->setZero(q, q);
        if (S) S->setZero(q, q);
        for (std::size_t r = lo; r < hi; ++r) {
            const Eigen::Index ri = static_cast<Eigen::Index>(r);
            double w = design.w[ri];
            if (w == 0.0 && !B) continue;
            double eta = design.X.row(ri).dot(beta);
            LinkEval le = eval_link(link, eta);
            if (le.clamped && clamps && w != 0.0) ++(*clamps);
            if (w == 0.0) continue;
            double resid = design.y[ri] - le.mean;
            if (phi) phi->noalias() += (w * le.dmean * resid) * design.X.row(ri).transpose();
            if (B)
                B->noalias() += (w * (le.d2mean * resid - le.dmean * le.dmean)) *
                                (design.X.row(ri).transpose() * design.X.row(ri));
            if (S)
                S->noalias() += (w * le.dmean * le.dmean) *
                                (design.X.row(ri).transpose() * design.X.row(ri));
        }
    }
};

void check_preconditions(const DesignMatrix& design) {
    if (design.n_rows() == 0) throw DataError("EmptyCell: design has no rows");
    if (!design.regime_labels.empty()) {
        std::vector<char> has_mass(design.regime_labels.size(), 0);
        std::vector<char> present(design.regime_labels.size(), 0);
        for (std::size_t i = 0; i < design.n_rows(); ++i) {
            if (design.regime[i] < 0) continue;
            present[static_cast<std::size_t>(design.regime[i])] = 1;
            if (design.w[static_cast<Eigen::Index>(i)] > 0.0)
                has_mass[static_cast<std::size_t>(design.regime[i])] = 1;
        }
        for (std::size_t r = 0; r < design.regime_labels.size(); ++r)
            if (present[r] && !has_mass[r])
                throw DataError("EmptyCell: regime '" + design.regime_labels[r] +
                                "' has no positive-weight rows");
    }
}

// Inverse through a symmetric eigendecomposition so near-singularity can be
// reported with its null-space direction.
Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& m, const std::string& what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const auto& ev = es.eigenvalues();
    double max_abs = ev.cwiseAbs().maxCoeff();
    Eigen::Index min_idx = 0;
    ev.cwiseAbs().minCoeff(&min_idx);
    if (max_abs <= 0.0 || ev.cwiseAbs()[min_idx] <= 1e-12 * max_abs) {
        std::string dir = "[";
        for (Eigen::Index i = 0; i < es.eigenvectors().rows(); ++i) {
            if (i) dir += ", ";
            dir += format_double(es.eigenvectors()(i, min_idx));
        }
        dir += "]";
        throw NumericError("SingularSystem: " + what + " is singular; null-space direction " +
                           dir);
    }
    return es.eigenvectors() *
           ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

Eigen::VectorXd warm_start(const DesignMatrix& design, const WorkingModel& model) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(model.q());
    int intercept = -1;
    for (std::size_t i = 0; i < model.features.size(); ++i)
        if (model.features[i].kind == Feature::Kind::intercept)
            intercept = static_cast<int>(i);
    if (intercept < 0 || model.link == Link::identity) return beta;
    double sw = 0.0, swy = 0.0;
    for (Eigen::Index i = 0; i < design.y.size(); ++i) {
        sw += design.w[i];
        swy += design.w[i] * design.y[i];
    }
    if (sw <= 0.0) return beta;
    double mean = swy / sw;
    if (model.link == Link::logit) {
        mean = std::min(std::max(mean, 1e-6), 1.0 - 1e-6);
        beta[intercept] = std::log(mean / (1.0 - mean));
    } else {
        mean = std::max(mean, 1e-6);
        beta[intercept] = std::log(mean);
    }
    return beta;
}

}  // namespace

Eigen::VectorXd estimating_function(const DesignMatrix& design, const WorkingModel& model,
                                    const Eigen::VectorXd& beta, std::size_t cluster_index) {
    auto ranges = design.cluster_ranges();
    ClusterPass pass{design, model.link, beta};
    Eigen::VectorXd phi;
    pass.run(ranges[cluster_index].first, ranges[cluster_index].second, &phi, nullptr, nullptr,
             nullptr);
    return phi;
}

Eigen::VectorXd mean_estimating_function(const DesignMatrix& design, const WorkingModel& model,
                                         const Eigen::VectorXd& beta, int threads) {
    auto ranges = design.cluster_ranges();
    const std::size_t n = ranges.size();
    const Eigen::Index q = design.X.cols();
    Eigen::MatrixXd slots(q, static_cast<Eigen::Index>(n));
    ClusterPass pass{design, model.link, beta};
    parallel_for(n, threads, [&](std::size_t c) {
        Eigen::VectorXd phi;
        pass.run(ranges[c].first, ranges[c].second, &phi, nullptr, nullptr, nullptr);
        slots.col(static_cast<Eigen::Index>(c)) = phi;
    });
    Eigen::VectorXd total(q);
    for (Eigen::Index k = 0; k < q; ++k) {
        // Pairwise over the per-cluster slots, coordinate by coordinate.
        std::vector<double> vals(n);
        for (std::size_t c = 0; c < n; ++c) vals[c] = slots(k, static_cast<Eigen::Index>(c));
        total[k] = pairwise_sum(vals);
    }
    return total / static_cast<double>(n);
}

static Eigen::MatrixXd mean_jacobian(const DesignMatrix& design, const WorkingModel& model,
                                     const Eigen::VectorXd& beta, std::int64_t* clamps) {
    auto ranges = design.cluster_ranges();
    ClusterPass pass{design, model.link, beta};
    const Eigen::Index q = design.X.cols();
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(q, q);
    Eigen::MatrixXd total = blocked_reduce(ranges.size(), zero,
                                           [&](Eigen::MatrixXd& acc, std::size_t c) {
                                               Eigen::MatrixXd B;
                                               pass.run(ranges[c].first, ranges[c].second,
                                                        nullptr, &B, nullptr, clamps);
                                               acc += B;
                                           });
    return total / static_cast<double>(ranges.size());
}

static Eigen::MatrixXd fd_mean_jacobian(const DesignMatrix& design, const WorkingModel& model,
                                        const Eigen::VectorXd& beta, int threads) {
    const Eigen::Index q = beta.size();
    Eigen::MatrixXd J(q, q);
    double h0 = 1e-6;
    for (Eigen::Index j = 0; j < q; ++j) {
        double h = h0 * std::max(1.0, std::abs(beta[j]));
        Eigen::VectorXd bp = beta, bm = beta;
        bp[j] += h;
        bm[j] -= h;
        J.col(j) = (mean_estimating_function(design, model, bp, threads) -
                    mean_estimating_function(design, model, bm, threads)) /
                   (2.0 * h);
    }
    return J;
}

VcovResult sandwich_vcov(const DesignMatrix& design, const WorkingModel& model,
                         const Eigen::VectorXd& beta, const std::vector<std::string>& names,
                         int threads) {
    auto ranges = design.cluster_ranges();
    const std::size_t n = ranges.size();
    const Eigen::Index q = design.X.cols();
    ClusterPass pass{design, model.link, beta};

    bool want_cr2 = std::find(names.begin(), names.end(), "CR2") != names.end();
    bool want_cr3 = std::find(names.begin(), names.end(), "CR3") != names.end();
    bool want_leverage = want_cr2 || want_cr3;

    Eigen::MatrixXd phi_slots(q, static_cast<Eigen::Index>(n));
    parallel_for(n, threads, [&](std::size_t c) {
        Eigen::VectorXd phi;
        pass.run(ranges[c].first, ranges[c].second, &phi, nullptr, nullptr, nullptr);
        phi_slots.col(static_cast<Eigen::Index>(c)) = phi;
    });

    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(q, q);
    Eigen::MatrixXd A = blocked_reduce(n, zero, [&](Eigen::MatrixXd& acc, std::size_t c) {
        const auto phi = phi_slots.col(static_cast<Eigen::Index>(c));
        acc.noalias() += phi * phi.transpose();
    });
    A /= static_cast<double>(n);

    std::int64_t dummy_clamps = 0;
    Eigen::MatrixXd B = mean_jacobian(design, model, beta, &dummy_clamps);
    Eigen::MatrixXd B_inv = checked_inverse(B, "B_hat");

    VcovResult out;
    out.A_hat = A;
    out.B_hat = B;

    Eigen::MatrixXd sandwich = B_inv * A * B_inv / static_cast<double>(n);
    sandwich = 0.5 * (sandwich + sandwich.transpose());

    for (const auto& name : names) {
        if (name == "sandwich") {
            out.vcov["sandwich"] = sandwich;
        } else if (name == "CR1") {
            if (static_cast<Eigen::Index>(n) <= q)
                throw NumericError("SingularSystem: CR1 needs n_clusters > q (n=" +
                                   std::to_string(n) + ", q=" + std::to_string(q) + ")");
            out.vcov["CR1"] =
                sandwich * (static_cast<double>(n) / static_cast<double>(n - static_cast<std::size_t>(q)));
        } else if (name != "CR2" && name != "CR3") {
            throw ConfigError("UnknownVcov: '" + name + "'");
        }
    }

    if (want_leverage) {
        Eigen::MatrixXd S = blocked_reduce(n, zero, [&](Eigen::MatrixXd& acc, std::size_t c) {
            Eigen::MatrixXd Sc;
            pass.run(ranges[c].first, ranges[c].second, nullptr, nullptr, &Sc, nullptr);
            acc += Sc;
        });
        // Symmetric inverse square root of S; G_c = S^{-1/2} S_c S^{-1/2}
        // holds the cluster leverage eigenvalues.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
        double max_ev = es.eigenvalues().maxCoeff();
        if (max_ev <= 0.0 || es.eigenvalues().minCoeff() <= 1e-12 * max_ev)
            throw NumericError("SingularSystem: weighted cross-product is rank deficient");
        Eigen::MatrixXd S_isqrt = es.eigenvectors() *
                                  es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                                  es.eigenvectors().transpose();

        std::atomic<std::int64_t> lev_clamps{0};
        Eigen::MatrixXd adj2_slots, adj3_slots;
        if (want_cr2) adj2_slots.resize(q, static_cast<Eigen::Index>(n));
        if (want_cr3) adj3_slots.resize(q, static_cast<Eigen::Index>(n));
        parallel_for(n, threads, [&](std::size_t c) {
            Eigen::MatrixXd Sc;
            pass.run(ranges[c].first, ranges[c].second, nullptr, nullptr, &Sc, nullptr);
            Eigen::MatrixXd G = S_isqrt * Sc * S_isqrt;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ge(0.5 * (G + G.transpose()));
            Eigen::VectorXd lam = ge.eigenvalues();
            Eigen::VectorXd coef2(q), coef3(q);
            for (Eigen::Index i = 0; i < q; ++i) {
                double l = lam[i];
                if (l < 0.0) l = 0.0;
                if (l > 1.0 - 1e-8) {
                    l = 1.0 - 1e-8;
                    ++lev_clamps;
                }
                coef2[i] = l < 1e-12 ? 0.5 : (1.0 / std::sqrt(1.0 - l) - 1.0) / l;
                coef3[i] = 1.0 / (1.0 - l);
            }
            // Adjusted score: phi + S_c S^{-1/2} V diag(coef) V^T S^{-1/2} phi,
            // the low-rank form of (I - H_c)^{-1/2} (resp. ^{-1}) applied to
            // the half-weighted cluster residuals.
            const auto phi = phi_slots.col(static_cast<Eigen::Index>(c));
            Eigen::VectorXd t_vec = ge.eigenvectors().transpose() * (S_isqrt * phi);
            if (want_cr2)
                adj2_slots.col(static_cast<Eigen::Index>(c)) =
                    phi + Sc * (S_isqrt * (ge.eigenvectors() * coef2.cwiseProduct(t_vec).eval()));
            if (want_cr3)
                adj3_slots.col(static_cast<Eigen::Index>(c)) =
                    phi + Sc * (S_isqrt * (ge.eigenvectors() * coef3.cwiseProduct(t_vec).eval()));
        });
        out.leverage_clamps = lev_clamps.load();
        auto finish = [&](const Eigen::MatrixXd& slots) {
            Eigen::MatrixXd meat =
                blocked_reduce(n, zero, [&](Eigen::MatrixXd& acc, std::size_t c) {
                    const auto s = slots.col(static_cast<Eigen::Index>(c));
                    acc.noalias() += s * s.transpose();
                });
            meat /= static_cast<double>(n);
            Eigen::MatrixXd v = B_inv * meat * B_inv / static_cast<double>(n);
            return Eigen::MatrixXd(0.5 * (v + v.transpose()));
        };
        if (want_cr2) out.vcov["CR2"] = finish(adj2_slots);
        if (want_cr3) out.vcov["CR3"] = finish(adj3_slots);
    }
    return out;
}

FitResult solve_beta(const DesignMatrix& design, const WorkingModel& model,
                     const SolveOptions& opts) {
    model.validate();
    check_preconditions(design);
    const Eigen::Index q = model.q();
    if (design.X.cols() != q) throw ConfigError("design width does not match model");

    FitResult fit;
    fit.link = link_name(model.link);
    fit.feature_names = design.feature_names;
    fit.n_subjects = static_cast<int>(design.n_clusters());
    fit.n_rows = design.n_rows();

    std::int64_t clamps = 0;
    Eigen::VectorXd beta;

    if (model.link == Link::identity && !opts.force_newton) {
        // Weighted least squares on the h*ipw-weighted rows.
        Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(q, q);
        Eigen::MatrixXd M = blocked_reduce(
            design.n_rows(), zero, [&](Eigen::MatrixXd& acc, std::size_t i) {
                const Eigen::Index ri = static_cast<Eigen::Index>(i);
                if (design.w[ri] == 0.0) return;
                acc.noalias() +=
                    design.w[ri] * (design.X.row(ri).transpose() * design.X.row(ri));
            });
        Eigen::VectorXd b = blocked_reduce(
            design.n_rows(), Eigen::VectorXd(Eigen::VectorXd::Zero(q)),
            [&](Eigen::VectorXd& acc, std::size_t i) {
                const Eigen::Index ri = static_cast<Eigen::Index>(i);
                if (design.w[ri] == 0.0) return;
                acc.noalias() += (design.w[ri] * design.y[ri]) * design.X.row(ri).transpose();
            });
        Eigen::MatrixXd M_inv = checked_inverse(M, "normal equations");
        beta = M_inv * b;
        fit.iterations = 0;
    } else {
        beta = opts.init ? *opts.init : warm_start(design, model);
        if (beta.size() != q) throw ConfigError("init vector length must equal q");
        Eigen::VectorXd score = mean_estimating_function(design, model, beta, opts.threads);
        double res = score.cwiseAbs().maxCoeff();
        int iter = 0;
        while (res > opts.tol && iter < opts.max_iter) {
            Eigen::MatrixXd J = opts.fd_jacobian
                                    ? fd_mean_jacobian(design, model, beta, opts.threads)
                                    : mean_jacobian(design, model, beta, &clamps);
            Eigen::MatrixXd J_inv = checked_inverse(J, "Jacobian B_hat");
            Eigen::VectorXd step = -(J_inv * score);
            double scale = 1.0;
            Eigen::VectorXd best_beta = beta + step;
            Eigen::VectorXd best_score =
                mean_estimating_function(design, model, best_beta, opts.threads);
            double best_res = best_score.cwiseAbs().maxCoeff();
            int halvings = 0;
            while (best_res >= res && halvings < 40) {
                scale *= 0.5;
                best_beta = beta + scale * step;
                best_score = mean_estimating_function(design, model, best_beta, opts.threads);
                best_res = best_score.cwiseAbs().maxCoeff();
                ++halvings;
            }
            beta = best_beta;
            score = best_score;
            if (best_res >= res && halvings >= 40) {
                res = best_res;
                ++iter;
                break;  // damping stalled; report NoConvergence via flags
            }
            res = best_res;
            ++iter;
        }
        fit.iterations = iter;
    }

    Eigen::VectorXd score = mean_estimating_function(design, model, beta, opts.threads);
    fit.residual_norm = score.cwiseAbs().maxCoeff();
    fit.converged = fit.residual_norm <= std::max(opts.tol, 1e-12);
    fit.beta = beta;

    VcovResult vc = sandwich_vcov(design, model, beta, opts.vcov_names, opts.threads);
    fit.vcov = std::move(vc.vcov);
    fit.A_hat = vc.A_hat;
    fit.B_hat = vc.B_hat;
    fit.leverage_clamps = vc.leverage_clamps;

    // Count clamp events once over the final pass.
    if (model.link != Link::identity) {
        auto ranges = design.cluster_ranges();
        ClusterPass pass{design, model.link, beta};
        std::int64_t final_clamps = 0;
        for (const auto& [lo, hi] : ranges) {
            Eigen::VectorXd phi;
            pass.run(lo, hi, &phi, nullptr, nullptr, &final_clamps);
        }
        fit.clamp_events = final_clamps;
    }
    return fit;
}

double normal_quantile(double p) {
    if (p <= 0.0 || p >= 1.0) throw ConfigError("quantile needs p in (0,1)");
    // Acklam's rational approximation polished with one Halley step.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    double x;
    if (p < 0.02425) {
        double u = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
    } else if (p <= 0.97575) {
        double u = p - 0.5, t = u * u;
        x = (((((a[0] * t + a[1]) * t + a[2]) * t + a[3]) * t + a[4]) * t + a[5]) * u /
            (((((b[0] * t + b[1]) * t + b[2]) * t + b[3]) * t + b[4]) * t + 1.0);
    } else {
        double u = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
    }
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

Contrast wald(const FitResult& fit, const Eigen::VectorXd& c, double level,
              const std::string& vcov_name, const std::string& name) {
    if (c.size() != fit.beta.size())
        throw ConfigError("contrast length " + std::to_string(c.size()) + " != q=" +
                          std::to_string(fit.beta.size()));
    if (level <= 0.0 || level >= 1.0) throw ConfigError("level must be in (0,1)");
    auto it = fit.vcov.find(vcov_name);
    if (it == fit.vcov.end()) throw ConfigError("UnknownVcov: '" + vcov_name + "'");
    Contrast out;
    out.name = name;
    out.c = c;
    out.level = level;
    out.vcov_name = vcov_name;
    out.estimate = c.dot(fit.beta);
    double var = c.dot(it->second * c);
    out.se = var > 0.0 ? std::sqrt(var) : 0.0;
    double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    out.lo = out.estimate - z * out.se;
    out.hi = out.estimate + z * out.se;
    out.p_value = out.se > 0.0
                      ? std::erfc(std::abs(out.estimate / out.se) / std::sqrt(2.0))
                      : (out.estimate == 0.0 ? 1.0 : 0.0);
    return out;
}

FitResult availability_conditional_fit(const Panel& panel, const WorkingModel& model,
                                       const SolveOptions& opts) {
    DesignMatrix design = build_conditional_design(panel, model);
    return solve_beta(design, model, opts);
}

static json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

static Eigen::MatrixXd matrix_from_json(const json& j) {
    if (j.empty()) return {};
    Eigen::MatrixXd m(j.size(), j[0].size());
    for (std::size_t i = 0; i < j.size(); ++i)
        for (std::size_t k = 0; k < j[i].size(); ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    return m;
}

std::string FitResult::to_json() const {
    json j;
    j["coefficients"] = json::object();
    for (Eigen::Index i = 0; i < beta.size(); ++i)
        j["coefficients"][feature_names[static_cast<std::size_t>(i)]] = beta[i];
    j["beta"] = std::vector<double>(beta.data(), beta.data() + beta.size());
    j["feature_names"] = feature_names;
    j["link"] = link;
    j["vcov"] = json::object();
    for (const auto& [name, m] : vcov) j["vcov"][name] = matrix_to_json(m);
    j["A_hat"] = matrix_to_json(A_hat);
    j["B_hat"] = matrix_to_json(B_hat);
    j["n_subjects"] = n_subjects;
    j["n_rows"] = n_rows;
    j["convergence"] = {{"converged", converged},
                        {"iterations", iterations},
                        {"residual_norm", residual_norm},
                        {"clamp_events", clamp_events},
                        {"leverage_clamps", leverage_clamps}};
    return j.dump(2);
}

FitResult FitResult::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("fit document is not valid JSON: ") + e.what());
    }
    FitResult fit;
    try {
        auto betas = j.at("beta").get<std::vector<double>>();
        fit.beta = Eigen::Map<Eigen::VectorXd>(betas.data(),
                                               static_cast<Eigen::Index>(betas.size()));
        fit.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        fit.link = j.at("link").get<std::string>();
        for (const auto& [name, m] : j.at("vcov").items()) fit.vcov[name] = matrix_from_json(m);
        fit.A_hat = matrix_from_json(j.at("A_hat"));
        fit.B_hat = matrix_from_json(j.at("B_hat"));
        fit.n_subjects = j.at("n_subjects").get<int>();
        fit.n_rows = j.at("n_rows").get<std::size_t>();
        const auto& conv = j.at("convergence");
        fit.converged = conv.at("converged").get<bool>();
        fit.iterations = conv.at("iterations").get<int>();
        fit.residual_norm = conv.at("residual_norm").get<double>();
        fit.clamp_events = conv.at("clamp_events").get<std::int64_t>();
        fit.leverage_clamps = conv.at("leverage_clamps").get<std::int64_t>();
    } catch (const json::exception& e) {
        throw DataError(std::string("fit document missing fields: ") + e.what());
    }
    return fit;
}

}  // namespace hrmsm
