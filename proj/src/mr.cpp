#include "hrmsm/mr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hrmsm/common.hpp"
#include "hrmsm/regimes.hpp"
#include "hrmsm/rng.hpp"

namespace hrmsm {

namespace {

// Drop columns that are constant over the training rows (keeping column 0,
// the intercept); returns the kept indices. Evaluation re-applies the mask.
std::vector<int> nonconstant_columns(const Eigen::MatrixXd& X) {
    std::vector<int> keep;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (j == 0) {
            keep.push_back(0);
            continue;
        }
        double lo = X.col(j).minCoeff();
        double hi = X.col(j).maxCoeff();
        if (hi - lo > 1e-12) keep.push_back(static_cast<int>(j));
    }
    return keep;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<int>& keep) {
    Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = X.col(keep[k]);
    return out;
}

LearnerResult fit_pruned(const Learner& learner, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& y) {
    std::vector<int> keep = nonconstant_columns(X);
    Eigen::MatrixXd Xk = select_columns(X, keep);
    LearnerResult inner = learner.fit(Xk, y);
    LearnerResult out;
    // Report coefficients on the full column layout, zeros for dropped ones.
    out.coefficients = Eigen::VectorXd::Zero(X.cols());
    for (std::size_t k = 0; k < keep.size(); ++k)
        out.coefficients[keep[k]] = inner.coefficients[static_cast<Eigen::Index>(k)];
    out.predict = [keep, inner](const Eigen::RowVectorXd& x) {
        Eigen::RowVectorXd xk(static_cast<Eigen::Index>(keep.size()));
        for (std::size_t k = 0; k < keep.size(); ++k)
            xk[static_cast<Eigen::Index>(k)] = x[keep[k]];
        return inner.predict(xk);
    };
    return out;
}

}  // namespace

LearnerResult LinearLearner::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) const {
    if (X.rows() < X.cols())
        throw NumericError("RankDeficientDesign: " + std::to_string(X.rows()) + " rows for " +
                           std::to_string(X.cols()) + " columns");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols())
        throw NumericError("RankDeficientDesign: rank " + std::to_string(qr.rank()) + " < " +
                           std::to_string(X.cols()) + " columns");
    Eigen::VectorXd coef = qr.solve(y);
    LearnerResult out;
    out.coefficients = coef;
    out.predict = [coef](const Eigen::RowVectorXd& x) { return x.dot(coef); };
    return out;
}

LearnerResult LogisticLearner::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) const {
    const Eigen::Index q = X.cols();
    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        qr.setThreshold(1e-10);
        if (qr.rank() < q)
            throw NumericError("RankDeficientDesign: rank " + std::to_string(qr.rank()) +
                               " < " + std::to_string(q) + " columns");
    }
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
    for (int iter = 0; iter < 50; ++iter) {
        Eigen::VectorXd eta = X * beta;
        Eigen::VectorXd mu = (1.0 + (-eta.array()).exp()).inverse();
        Eigen::VectorXd wt = mu.array() * (1.0 - mu.array());
        Eigen::VectorXd grad = X.transpose() * (y - mu);
        Eigen::MatrixXd hess = X.transpose() * wt.asDiagonal() * X;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
        if (ldlt.info() != Eigen::Success)
            throw NumericError("RankDeficientDesign: logistic Hessian not factorizable");
        Eigen::VectorXd step = ldlt.solve(grad);
        beta += step;
        if (step.cwiseAbs().maxCoeff() < 1e-10) break;
    }
    LearnerResult out;
    out.coefficients = beta;
    out.predict = [beta](const Eigen::RowVectorXd& x) {
        double eta = x.dot(beta);
        if (eta > 30.0) eta = 30.0;
        if (eta < -30.0) eta = -30.0;
        return 1.0 / (1.0 + std::exp(-eta));
    };
    return out;
}

NuisanceSet fit_nuisances(const Panel& panel, const NuisanceSpec& spec,
                          const std::vector<std::size_t>& training_subjects) {
    auto diagnostics = std::make_shared<NuisanceDiagnostics>();
    NuisanceSet ns;
    ns.diagnostics = diagnostics;

    std::vector<std::size_t> train = training_subjects;
    if (train.empty()) {
        train.resize(panel.n_subjects());
        std::iota(train.begin(), train.end(), 0);
    }

    std::vector<int> cov_idx;
    if (spec.covariates.empty()) {
        for (std::size_t i = 0; i < panel.covariate_names().size(); ++i)
            cov_idx.push_back(static_cast<int>(i));
    } else {
        for (const auto& name : spec.covariates) {
            int idx = panel.covariate_index(name);
            if (idx < 0) throw DataError("UnknownModifier: nuisance covariate '" + name + "'");
            cov_idx.push_back(idx);
        }
    }
    const std::size_t ncov = cov_idx.size();

    // Feature layouts:
    //   b1 rows: [1, X_{t-1}, A_{t-1}, X_t, A_t]
    //   b2 rows: [1, X_{t-1}, A_{t-1}]
    // Captured by value: the fill closures outlive this call inside the
    // returned NuisanceSet.
    auto fill_b1_row = [cov_idx, ncov](Eigen::RowVectorXd& row, const TrajectoryRecord& prev,
                                       const TrajectoryRecord& cur, double a_cur) {
        row[0] = 1.0;
        for (std::size_t k = 0; k < ncov; ++k)
            row[static_cast<Eigen::Index>(1 + k)] =
                prev.covariates[static_cast<std::size_t>(cov_idx[k])];
        row[static_cast<Eigen::Index>(1 + ncov)] = prev.treatment;
        for (std::size_t k = 0; k < ncov; ++k)
            row[static_cast<Eigen::Index>(2 + ncov + k)] =
                cur.covariates[static_cast<std::size_t>(cov_idx[k])];
        row[static_cast<Eigen::Index>(2 + 2 * ncov)] = a_cur;
    };
    auto fill_b2_row = [cov_idx, ncov](Eigen::RowVectorXd& row, const TrajectoryRecord& prev,
                                       double a_prev) {
        row[0] = 1.0;
        for (std::size_t k = 0; k < ncov; ++k)
            row[static_cast<Eigen::Index>(1 + k)] =
                prev.covariates[static_cast<std::size_t>(cov_idx[k])];
        row[static_cast<Eigen::Index>(1 + ncov)] = a_prev;
    };

    if (spec.zero_outcome_model) {
        ns.b1 = [](int, const TrajectoryRecord&, const TrajectoryRecord&) { return 0.0; };
        ns.b2 = [](int, int, const TrajectoryRecord&) { return 0.0; };
    } else {
        std::size_t n_windows = 0;
        for (std::size_t si : train) {
            const auto& recs = panel.subject(si).records;
            if (recs.size() >= 2) n_windows += recs.size() - 1;
        }
        if (n_windows == 0)
            throw DataError("NuisanceFitFailure: no length-2 windows in training set");

        const Eigen::Index p1 = static_cast<Eigen::Index>(3 + 2 * ncov);
        Eigen::MatrixXd X1(static_cast<Eigen::Index>(n_windows), p1);
        Eigen::VectorXd y1(static_cast<Eigen::Index>(n_windows));
        Eigen::Index row_i = 0;
        for (std::size_t si : train) {
            const auto& recs = panel.subject(si).records;
            for (std::size_t t = 1; t < recs.size(); ++t) {
                Eigen::RowVectorXd row(p1);
                fill_b1_row(row, recs[t - 1], recs[t], recs[t].treatment);
                X1.row(row_i) = row;
                y1[row_i] = recs[t].outcome;
                ++row_i;
            }
        }
        LearnerResult f1;
        try {
            f1 = fit_pruned(*spec.outcome_learner, X1, y1);
        } catch (const Error& e) {
            throw NumericError(std::string("NuisanceFitFailure: b1: ") + e.what());
        }
        diagnostics->outcome_coefficients = f1.coefficients;

        // b2^{j2} regresses the b1 predictions at A_t := j2 * I_t on H_{t-1}.
        const Eigen::Index p2 = static_cast<Eigen::Index>(2 + ncov);
        std::array<Predictor, 2> g;
        for (int j2 = 0; j2 < 2; ++j2) {
            Eigen::MatrixXd X2(static_cast<Eigen::Index>(n_windows), p2);
            Eigen::VectorXd y2(static_cast<Eigen::Index>(n_windows));
            Eigen::Index r = 0;
            for (std::size_t si : train) {
                const auto& recs = panel.subject(si).records;
                for (std::size_t t = 1; t < recs.size(); ++t) {
                    Eigen::RowVectorXd row1(p1);
                    fill_b1_row(row1, recs[t - 1], recs[t],
                                static_cast<double>(j2 * recs[t].availability));
                    Eigen::RowVectorXd row2(p2);
                    fill_b2_row(row2, recs[t - 1], recs[t - 1].treatment);
                    X2.row(r) = row2;
                    y2[r] = f1.predict(row1);
                    ++r;
                }
            }
            LearnerResult fit2;
            try {
                fit2 = fit_pruned(*spec.outcome_learner, X2, y2);
            } catch (const Error& e) {
                throw NumericError(std::string("NuisanceFitFailure: b2: ") + e.what());
            }
            diagnostics->b2_coefficients[static_cast<std::size_t>(j2)] = fit2.coefficients;
            g[static_cast<std::size_t>(j2)] = fit2.predict;
        }

        ns.b1 = [fill_b1_row, f1, p1](int j, const TrajectoryRecord& prev,
                                      const TrajectoryRecord& cur) {
            Eigen::RowVectorXd row(p1);
            fill_b1_row(row, prev, cur, static_cast<double>(j * cur.availability));
            return f1.predict(row);
        };
        ns.b2 = [fill_b2_row, g, p2](int j1, int j2, const TrajectoryRecord& prev) {
            Eigen::RowVectorXd row(p2);
            fill_b2_row(row, prev, static_cast<double>(j1 * prev.availability));
            return g[static_cast<std::size_t>(j2)](row);
        };
    }

    switch (spec.propensity) {
        case PropensityMode::known:
            ns.pi_obs = [](const TrajectoryRecord& rec) {
                return rec.treatment ? rec.propensity : 1.0 - rec.propensity;
            };
            break;
        case PropensityMode::constant: {
            double c = spec.constant_pi;
            if (c <= 0.0 || c >= 1.0)
                throw ConfigError("constant propensity must lie in (0,1)");
            ns.pi_obs = [c](const TrajectoryRecord& rec) {
                return rec.treatment ? c : 1.0 - c;
            };
            break;
        }
        case PropensityMode::fitted: {
            std::size_t n_avail = 0;
            for (std::size_t si : train)
                for (const auto& rec : panel.subject(si).records)
                    if (rec.availability == 1) ++n_avail;
            if (n_avail == 0)
                throw DataError("NuisanceFitFailure: no available rows to fit propensity");
            const Eigen::Index pp = static_cast<Eigen::Index>(1 + ncov);
            Eigen::MatrixXd Xp(static_cast<Eigen::Index>(n_avail), pp);
            Eigen::VectorXd yp(static_cast<Eigen::Index>(n_avail));
            Eigen::Index r = 0;
            for (std::size_t si : train) {
                for (const auto& rec : panel.subject(si).records) {
                    if (rec.availability != 1) continue;
                    Xp(r, 0) = 1.0;
                    for (std::size_t k = 0; k < ncov; ++k)
                        Xp(r, static_cast<Eigen::Index>(1 + k)) =
                            rec.covariates[static_cast<std::size_t>(cov_idx[k])];
                    yp[r] = rec.treatment;
                    ++r;
                }
            }
            LearnerResult fp;
            try {
                fp = fit_pruned(*spec.propensity_learner, Xp, yp);
            } catch (const Error& e) {
                throw NumericError(std::string("NuisanceFitFailure: propensity: ") + e.what());
            }
            diagnostics->propensity_coefficients = fp.coefficients;
            double eps = spec.epsilon;
            auto diag = diagnostics;
            std::vector<int> cidx = cov_idx;
            ns.pi_obs = [fp, eps, diag, cidx, pp](const TrajectoryRecord& rec) {
                ++diag->propensity_evaluations;
                if (rec.availability == 0) return rec.treatment ? 0.0 : 1.0;
                Eigen::RowVectorXd row(pp);
                row[0] = 1.0;
                for (std::size_t k = 0; k < cidx.size(); ++k)
                    row[static_cast<Eigen::Index>(1 + k)] =
                        rec.covariates[static_cast<std::size_t>(cidx[k])];
                double p = fp.predict(row);
                if (p < eps || p > 1.0 - eps) {
                    ++diag->propensity_clamped;
                    p = std::min(std::max(p, eps), 1.0 - eps);
                }
                return rec.treatment ? p : 1.0 - p;
            };
            break;
        }
    }
    return ns;
}

std::vector<int> fold_assignment(std::size_t n_subjects, const CrossFitPlan& plan) {
    if (plan.folds < 2) throw ConfigError("cross-fitting needs folds >= 2");
    if (n_subjects < static_cast<std::size_t>(plan.folds))
        throw ConfigError("cross-fitting needs at least one subject per fold (n=" +
                          std::to_string(n_subjects) + ", folds=" + std::to_string(plan.folds) +
                          ")");
    std::vector<std::size_t> order(n_subjects);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(plan.seed, Rng::stream_id(0xFFFFFFFFull, 0xF01Dull));
    for (std::size_t i = n_subjects; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(order[i - 1], order[j]);
    }
    std::vector<int> fold(n_subjects);
    for (std::size_t pos = 0; pos < n_subjects; ++pos)
        fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(plan.folds));
    return fold;
}

ExpandedTable build_mr_pseudo_table(const Panel& panel, const RegimeSet& regimes,
                                    const std::vector<std::string>& modifier_names,
                                    const NuisanceSet& nuisances,
                                    const std::vector<int>* fold_of_subject,
                                    const std::vector<NuisanceSet>* per_fold) {
    if (regimes.gamma != 2)
        throw ConfigError("the multiply-robust estimator is defined for gamma=2 windows");
    ExpandedTable table = expand_panel(panel, regimes, modifier_names, {});
    for (auto& row : table.rows) {
        const NuisanceSet& ns =
            per_fold ? (*per_fold)[static_cast<std::size_t>(
                           (*fold_of_subject)[static_cast<std::size_t>(row.subject)])]
                     : nuisances;
        const SubjectBlock& s = panel.subject(static_cast<std::size_t>(row.subject));
        const TrajectoryRecord& cur = s.records[static_cast<std::size_t>(row.t - 1)];
        const TrajectoryRecord& prev = s.records[static_cast<std::size_t>(row.t - 2)];
        int j1 = static_cast<int>(row.treat_mask & 1u);
        int j2 = static_cast<int>((row.treat_mask >> 1) & 1u);
        int c1 = prev.treatment == j1 * prev.availability ? 1 : 0;
        int c2 = cur.treatment == j2 * cur.availability ? 1 : 0;
        double p1 = ns.pi_obs(prev);
        double p2 = ns.pi_obs(cur);
        if (p1 <= 0.0 || p2 <= 0.0)
            throw DataError("DegeneratePropensity: modeled probability of the observed "
                            "treatment is 0 at subject '" +
                            s.id + "' t=" + std::to_string(row.t));
        double b1v = ns.b1(j2, prev, cur);
        double b2v = ns.b2(j1, j2, prev);
        double pseudo = b2v + (c1 / p1) * (b1v - b2v) +
                        (static_cast<double>(c1) * c2 / (p1 * p2)) * (cur.outcome - b1v);
        if (!std::isfinite(pseudo))
            throw NumericError("NonFinite: influence-function pseudo-outcome at subject '" +
                               s.id + "' t=" + std::to_string(row.t));
        row.outcome = pseudo;
        row.weight = 1.0;
        row.compliance = 1;
    }
    return table;
}

MrFit solve_mr(const Panel& panel, const WorkingModel& model, int gamma, const MrOptions& opts) {
    if (gamma != 2)
        throw ConfigError("the multiply-robust estimator supports gamma=2 only (got " +
                          std::to_string(gamma) + "); use the IPW estimator for other windows");
    MrFit out;
    out.fold_of_subject = fold_assignment(panel.n_subjects(), opts.plan);

    std::vector<NuisanceSet> per_fold;
    for (int k = 0; k < opts.plan.folds; ++k) {
        std::vector<std::size_t> train;
        for (std::size_t si = 0; si < panel.n_subjects(); ++si)
            if (out.fold_of_subject[si] != k) train.push_back(si);
        per_fold.push_back(fit_nuisances(panel, opts.nuisances, train));
    }

    std::vector<std::string> modifier_names;
    for (const auto& f : model.features)
        if (f.kind == Feature::Kind::modifier) modifier_names.push_back(f.name);

    RegimeSet regimes = enumerate_regimes(2, opts.max_dose);
    ExpandedTable pseudo = build_mr_pseudo_table(panel, regimes, modifier_names, NuisanceSet{},
                                                 &out.fold_of_subject, &per_fold);
    DesignMatrix design = build_design(pseudo, model);
    out.fit = solve_beta(design, model, opts.solve);
    for (const auto& ns : per_fold) out.fold_diagnostics.push_back(*ns.diagnostics);
    return out;
}

}  // namespace hrmsm
