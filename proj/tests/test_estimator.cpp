#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "hrmsm/common.hpp"
#include "hrmsm/estimator.hpp"
#include "hrmsm/rng.hpp"
#include "hrmsm/simulate.hpp"

using namespace hrmsm;

namespace {

// Open-loop panel: I=1 everywhere, constant randomization probability.
Panel open_loop_panel(int n, int T, double pi, std::uint64_t seed, bool binary_outcome = false) {
    std::ostringstream csv;
    csv << "subject,t,I,A,Y,pi\n";
    Rng rng(seed, 1);
    for (int s = 0; s < n; ++s) {
        int a_prev = 0;
        for (int t = 1; t <= T; ++t) {
            int a = rng.bernoulli(pi) ? 1 : 0;
            double y;
            if (binary_outcome) {
                double p = 1.0 / (1.0 + std::exp(-(-0.5 + 0.8 * a + 0.3 * a_prev)));
                y = rng.bernoulli(p) ? 1.0 : 0.0;
            } else {
                y = 0.5 + 1.2 * a + 0.4 * a_prev + rng.normal();
            }
            csv << "s" << (s < 10 ? "0" : "") << s << "," << t << ",1," << a << "," << y << ","
                << pi << "\n";
            a_prev = a;
        }
    }
    return ingest_string(csv.str());
}

FitResult fit_saturated(const Panel& panel, int gamma,
                        const SolveOptions& opts = {}) {
    WorkingModel model = make_saturated(gamma);
    ExpandedTable table = expand_panel(panel, enumerate_regimes(gamma), {});
    DesignMatrix design = build_design(table, model);
    return solve_beta(design, model, opts);
}

}  // namespace

TEST_CASE("estimating function on handmade rows") {
    DesignMatrix d;
    d.X.resize(3, 1);
    d.X << 1, 1, 1;
    d.y.resize(3);
    d.y << 2.0, 99.0, 5.0;
    d.w.resize(3);
    d.w << 1.0, 0.0, 2.0;  // middle row is non-compliant
    d.cluster = {0, 0, 1};
    d.regime = {-1, -1, -1};
    d.cluster_ids = {"a", "b"};
    d.feature_names = {"(Intercept)"};

    WorkingModel model;
    model.features.push_back({});

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(1);
    // Single subject, single weighted row: phi = w * (y - 0) = 2.
    Eigen::VectorXd phi_a = estimating_function(d, model, beta, 0);
    CHECK(phi_a[0] == doctest::Approx(2.0));
    // Zero-weight rows contribute exactly nothing, whatever their outcome.
    d.y[1] = 1e12;
    CHECK(estimating_function(d, model, beta, 0)[0] == doctest::Approx(2.0));
    CHECK(estimating_function(d, model, beta, 1)[0] == doctest::Approx(10.0));
}

TEST_CASE("gamma=1 saturated fit equals stratified means on a fixture") {
    // 20 (subject, t) rows, I=1, pi=0.5.
    std::ostringstream csv;
    csv.precision(17);
    csv << "subject,t,I,A,Y,pi\n";
    Rng rng(21, 0);
    std::vector<int> a_obs;
    std::vector<double> y_obs;
    for (int s = 0; s < 4; ++s)
        for (int t = 1; t <= 5; ++t) {
            int a = rng.bernoulli(0.5) ? 1 : 0;
            double y = 1.0 + 2.5 * a + rng.normal();
            a_obs.push_back(a);
            y_obs.push_back(y);
            csv << "s" << s << "," << t << ",1," << a << "," << y << ",0.5\n";
        }
    Panel p = ingest_string(csv.str());
    FitResult fit = fit_saturated(p, 1);

    // Independent oracle: plain stratified sample means.
    double sum0 = 0, sum1 = 0;
    int n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < a_obs.size(); ++i) {
        if (a_obs[i]) { sum1 += y_obs[i]; ++n1; }
        else { sum0 += y_obs[i]; ++n0; }
    }
    REQUIRE(n0 > 0);
    REQUIRE(n1 > 0);
    double mean0 = sum0 / n0, mean1 = sum1 / n1;
    CHECK(fit.beta[0] == doctest::Approx(mean0).epsilon(1e-9));
    CHECK(fit.beta[1] == doctest::Approx(mean1 - mean0).epsilon(1e-9));
}

TEST_CASE("closed-loop fixture recovers the closed-form coefficients") {
    SimScenario scenario;
    scenario.n = 300;
    scenario.T = 50;
    scenario.seed = 7;
    Panel p = simulate_panel(scenario);
    FitResult fit = fit_saturated(p, 2);
    TruthReport truth = true_beta(scenario.closed_loop.alpha);
    REQUIRE(fit.converged);
    for (int j = 0; j < 4; ++j) {
        double se = std::sqrt(fit.vcov.at("sandwich")(j, j));
        INFO("beta", j, " = ", fit.beta[j], " truth ", truth.beta[j], " se ", se);
        CHECK(std::abs(fit.beta[j] - truth.beta[j]) < 4.0 * se);
    }
}

TEST_CASE("analytic Jacobian matches finite differences") {
    SimScenario scenario;
    scenario.n = 60;
    scenario.T = 10;
    scenario.seed = 33;
    Panel p = simulate_panel(scenario);
    WorkingModel model = make_saturated(2, Link::logit);
    // Re-scale outcomes into (0,1) so the logit model is sensible.
    ExpandedTable table = expand_panel(p, enumerate_regimes(2), {});
    for (auto& row : table.rows)
        row.outcome = row.outcome > 1.5 ? 1.0 : 0.0;
    DesignMatrix design = build_design(table, model);

    SolveOptions analytic;
    FitResult fit = solve_beta(design, model, analytic);
    REQUIRE(fit.converged);

    SolveOptions fd = analytic;
    fd.fd_jacobian = true;
    FitResult fit_fd = solve_beta(design, model, fd);
    REQUIRE(fit_fd.converged);
    CHECK((fit.beta - fit_fd.beta).cwiseAbs().maxCoeff() < 1e-6);

    // Direct comparison of B_hat against the numeric Jacobian at beta_hat.
    Eigen::MatrixXd B = fit.B_hat;
    double h = 1e-6;
    Eigen::MatrixXd numeric(4, 4);
    for (int j = 0; j < 4; ++j) {
        Eigen::VectorXd bp = fit.beta, bm = fit.beta;
        bp[j] += h;
        bm[j] -= h;
        numeric.col(j) = (mean_estimating_function(design, model, bp) -
                          mean_estimating_function(design, model, bm)) /
                         (2.0 * h);
    }
    CHECK((B - numeric).norm() / numeric.norm() < 1e-5);
}

TEST_CASE("Newton path agrees with closed-form WLS on the identity link") {
    SimScenario scenario;
    scenario.n = 80;
    scenario.T = 12;
    scenario.seed = 101;
    Panel p = simulate_panel(scenario);
    FitResult direct = fit_saturated(p, 2);
    SolveOptions newton;
    newton.force_newton = true;
    FitResult iterated = fit_saturated(p, 2, newton);
    CHECK((direct.beta - iterated.beta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("all four covariance estimators agree at n=1000") {
    SimScenario scenario;
    scenario.n = 1000;
    scenario.T = 10;
    scenario.seed = 55;
    Panel p = simulate_panel(scenario);
    FitResult fit = fit_saturated(p, 2);
    const Eigen::MatrixXd& base = fit.vcov.at("sandwich");
    for (const std::string name : {"CR1", "CR2", "CR3"}) {
        double rel = (fit.vcov.at(name) - base).norm() / base.norm();
        INFO(name, " relative Frobenius distance ", rel);
        CHECK(rel < 0.05);
    }
}

TEST_CASE("single-cluster input cannot produce CR1") {
    std::ostringstream csv;
    csv << "subject,t,I,A,Y,pi\n";
    Rng rng(3, 0);
    for (int t = 1; t <= 8; ++t)
        csv << "only," << t << ",1," << (rng.bernoulli(0.5) ? 1 : 0) << "," << rng.normal()
            << ",0.5\n";
    Panel p = ingest_string(csv.str());
    CHECK_THROWS_WITH_AS(fit_saturated(p, 2), doctest::Contains("CR1"), NumericError);
}

TEST_CASE("wald contrasts") {
    SimScenario scenario;
    scenario.n = 120;
    scenario.T = 20;
    scenario.seed = 99;
    Panel p = simulate_panel(scenario);
    FitResult fit = fit_saturated(p, 2);

    SUBCASE("unit vectors reproduce per-coefficient intervals") {
        for (int j = 0; j < 4; ++j) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(4);
            e[j] = 1.0;
            Contrast c = wald(fit, e, 0.95, "CR2");
            CHECK(c.estimate == doctest::Approx(fit.beta[j]));
            CHECK(c.se == doctest::Approx(std::sqrt(fit.vcov.at("CR2")(j, j))));
            CHECK(c.lo <= c.estimate);
            CHECK(c.hi >= c.estimate);
        }
    }
    SUBCASE("dissipation and dose-average combinations") {
        Eigen::VectorXd dissipation(4);
        dissipation << 0, -1, 1, 0;
        Contrast d = wald(fit, dissipation);
        CHECK(d.estimate == doctest::Approx(fit.beta[2] - fit.beta[1]));

        Eigen::VectorXd dose(4);
        dose << 0, 0.5, 0.5, 0;
        Contrast avg = wald(fit, dose);
        CHECK(avg.estimate == doctest::Approx(0.5 * (fit.beta[1] + fit.beta[2])));
    }
    SUBCASE("unknown vcov and bad lengths are rejected") {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(4);
        e[0] = 1.0;
        CHECK_THROWS_AS(wald(fit, e, 0.95, "HC9"), ConfigError);
        CHECK_THROWS_AS(wald(fit, Eigen::VectorXd::Zero(3)), ConfigError);
    }
}

TEST_CASE("normal quantile sanity") {
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-8));
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
    CHECK(normal_quantile(0.025) == doctest::Approx(-1.959963985).epsilon(1e-8));
}

TEST_CASE("a regime with no compliant window is an EmptyCell error") {
    // Always-available, never-treated panel: regime sequences containing a
    // treat-if-available step are never matched.
    std::ostringstream csv;
    csv << "subject,t,I,A,Y,pi\n";
    Rng rng(8, 0);
    for (int s = 0; s < 5; ++s)
        for (int t = 1; t <= 6; ++t)
            csv << "s" << s << "," << t << ",1,0," << rng.normal() << ",0.5\n";
    Panel p = ingest_string(csv.str());
    CHECK_THROWS_WITH_AS(fit_saturated(p, 2), doctest::Contains("EmptyCell"), DataError);
}

TEST_CASE("availability-conditional fit") {
    WorkingModel model;
    model.features.push_back({});
    Feature tr;
    tr.kind = Feature::Kind::treatment;
    model.features.push_back(tr);

    SUBCASE("randomized pi=0.5 equals the unweighted regression on available rows") {
        SimScenario scenario;
        scenario.n = 50;
        scenario.T = 10;
        scenario.seed = 5;
        Panel p = simulate_panel(scenario);
        FitResult fit = availability_conditional_fit(p, model);

        // Unweighted OLS on (1, A) over I=1 rows.
        std::vector<double> ys;
        std::vector<int> as;
        for (const auto& s : p.subjects())
            for (const auto& r : s.records)
                if (r.availability == 1) {
                    ys.push_back(r.outcome);
                    as.push_back(r.treatment);
                }
        double sum0 = 0, sum1 = 0;
        int n0 = 0, n1 = 0;
        for (std::size_t i = 0; i < ys.size(); ++i) {
            if (as[i]) { sum1 += ys[i]; ++n1; } else { sum0 += ys[i]; ++n0; }
        }
        CHECK(fit.beta[0] == doctest::Approx(sum0 / n0).epsilon(1e-9));
        CHECK(fit.beta[1] == doctest::Approx(sum1 / n1 - sum0 / n0).epsilon(1e-9));
    }

    SUBCASE("availability-conditional blip recovers alpha4") {
        SimScenario scenario;
        scenario.n = 5000;
        scenario.T = 10;
        scenario.seed = 404;
        Panel p = simulate_panel(scenario);
        FitResult fit = availability_conditional_fit(p, model);
        double se = std::sqrt(fit.vcov.at("sandwich")(1, 1));
        CHECK(std::abs(fit.beta[1] - 0.5) < 3.0 * se);
    }

    SUBCASE("no available rows at all") {
        std::string csv =
            "subject,t,I,A,Y,pi\n"
            "a,1,0,0,1.0,0\n"
            "a,2,0,0,2.0,0\n"
            "b,1,0,0,0.5,0\n"
            "b,2,0,0,1.5,0\n";
        Panel p = ingest_string(csv);
        CHECK_THROWS_WITH_AS(availability_conditional_fit(p, model),
                             doctest::Contains("EmptyCell"), DataError);
    }
}

TEST_CASE("gamma=1 population contrast is the conditional effect diluted by availability") {
    SimScenario scenario;
    scenario.n = 5000;
    scenario.T = 10;
    scenario.seed = 2718;
    Panel p = simulate_panel(scenario);
    FitResult fit = fit_saturated(p, 1);
    // E[Y(d1)] - E[Y(d0)] = alpha4 * P[I=1] = 0.5 * 0.5.
    double se = std::sqrt(fit.vcov.at("sandwich")(1, 1));
    CHECK(std::abs(fit.beta[1] - 0.25) < 3.0 * se);
}

TEST_CASE("open-loop full expansion equals the observed-sequence weighted GEE") {
    SUBCASE("identity link") {
        Panel p = open_loop_panel(50, 10, 0.5, 909);
        WorkingModel model = make_saturated(2);
        ExpandedTable full = expand_panel(p, enumerate_regimes(2), {});
        ExpandOptions obs_opts;
        obs_opts.observed_only = true;
        ExpandedTable observed = expand_panel(p, enumerate_regimes(2), {}, obs_opts);
        FitResult a = solve_beta(build_design(full, model), model, {});
        FitResult b = solve_beta(build_design(observed, model), model, {});
        CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("logit link") {
        Panel p = open_loop_panel(60, 10, 0.4, 910, true);
        WorkingModel model = make_saturated(2, Link::logit);
        ExpandedTable full = expand_panel(p, enumerate_regimes(2), {});
        ExpandOptions obs_opts;
        obs_opts.observed_only = true;
        ExpandedTable observed = expand_panel(p, enumerate_regimes(2), {}, obs_opts);
        FitResult a = solve_beta(build_design(full, model), model, {});
        FitResult b = solve_beta(build_design(observed, model), model, {});
        REQUIRE(a.converged);
        REQUIRE(b.converged);
        CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("misspecified fits converge to the brute-force projection") {
    // Custom DGP with an opportunity-interaction term delta*A_{t-1}*A_t in
    // the outcome; the no-interaction working model is misspecified.
    const double a1 = 0.25, a2 = 2.0, a3 = 1.75, a4 = 0.5, delta = 1.5;
    const int T = 3, n = 30000;

    std::ostringstream csv2;
    csv2 << "subject,t,I,A,Y,pi\n";
    for (int s = 0; s < n; ++s) {
        Rng rng(515, Rng::stream_id(1, static_cast<std::uint64_t>(s)));
        int x_prev = rng.bernoulli(0.5) ? 1 : 0;
        int a_prev = rng.bernoulli(0.5 * x_prev) ? 1 : 0;
        for (int t = 1; t <= T; ++t) {
            int x = rng.bernoulli(0.4 + 0.4 * a_prev) ? 1 : 0;
            int a = rng.bernoulli(0.5 * x) ? 1 : 0;
            double y = a1 * x_prev + a2 * a_prev + a3 * x + a4 * a +
                       delta * a_prev * a + rng.normal();
            csv2 << "q" << s << "," << t << "," << x << "," << a << "," << y << ","
                 << (x ? 0.5 : 0.0) << "\n";
            x_prev = x;
            a_prev = a;
        }
    }
    Panel p = ingest_string(csv2.str());

    // Brute force the true counterfactual means over all (x_{t-1}, x_t).
    auto true_mean = [&](int j1, int j2) {
        double total = 0.0;
        for (int x1 = 0; x1 <= 1; ++x1) {
            double p1 = 0.5;
            int a_first = j1 * x1;
            for (int x2 = 0; x2 <= 1; ++x2) {
                double p2 = x2 ? 0.4 + 0.4 * a_first : 0.6 - 0.4 * a_first;
                int a_second = j2 * x2;
                double mean_y = a1 * x1 + a2 * a_first + a3 * x2 + a4 * a_second +
                                delta * a_first * a_second;
                total += p1 * p2 * mean_y;
            }
        }
        return total;
    };

    // Projection of the 4 regime means onto {1, J1, J2} with h=1 (the means
    // are time-stationary, so per-t sums collapse).
    Eigen::MatrixXd Xp(4, 3);
    Eigen::VectorXd yp(4);
    int r = 0;
    for (int j1 = 0; j1 <= 1; ++j1)
        for (int j2 = 0; j2 <= 1; ++j2) {
            Xp.row(r) << 1, j1, j2;
            yp[r] = true_mean(j1, j2);
            ++r;
        }
    Eigen::VectorXd projection = (Xp.transpose() * Xp).ldlt().solve(Xp.transpose() * yp);

    WorkingModel model;
    model.features.push_back({});
    Feature jprev;
    jprev.kind = Feature::Kind::position;
    jprev.lag = 1;
    model.features.push_back(jprev);
    Feature jcur;
    jcur.kind = Feature::Kind::position;
    jcur.lag = 0;
    model.features.push_back(jcur);

    ExpandedTable table = expand_panel(p, enumerate_regimes(2), {});
    DesignMatrix design = build_design(table, model);
    FitResult fit = solve_beta(design, model, {});
    for (int j = 0; j < 3; ++j) {
        double se = std::sqrt(fit.vcov.at("sandwich")(j, j));
        INFO("projection ", projection[j], " fitted ", fit.beta[j], " se ", se);
        CHECK(std::abs(fit.beta[j] - projection[j]) < 4.0 * se);
    }
}

TEST_CASE("sharp null: severing all treatment paths nulls every contrast") {
    SimScenario scenario;
    scenario.n = 2000;
    scenario.T = 20;
    scenario.seed = 1234;
    scenario.closed_loop.alpha = {0.25, 0.0, 0.0, 0.0};
    Panel p = simulate_panel(scenario);
    FitResult fit = fit_saturated(p, 2);

    WorkingModel model = make_saturated(2);
    ExpandedTable table = expand_panel(p, enumerate_regimes(2), {});
    for (int r1 = 0; r1 < 4; ++r1)
        for (int r2 = r1 + 1; r2 < 4; ++r2) {
            Eigen::VectorXd c = regime_design_vector(model, table, r1, 2) -
                                regime_design_vector(model, table, r2, 2);
            Contrast w = wald(fit, c);
            double z = w.se > 0 ? std::abs(w.estimate / w.se) : 0.0;
            INFO("pair ", r1, ",", r2, " estimate ", w.estimate, " z ", z);
            CHECK(z <= 4.0);
        }
}

TEST_CASE("non-convergence is reported, not hidden") {
    Panel p = open_loop_panel(40, 8, 0.4, 22, true);
    WorkingModel model = make_saturated(2, Link::logit);
    ExpandedTable table = expand_panel(p, enumerate_regimes(2), {});
    DesignMatrix design = build_design(table, model);
    SolveOptions opts;
    opts.max_iter = 1;
    opts.tol = 1e-14;
    FitResult fit = solve_beta(design, model, opts);
    CHECK(!fit.converged);
    CHECK(fit.iterations == 1);
    CHECK(fit.residual_norm > 1e-14);
}

TEST_CASE("fit results round-trip through JSON") {
    SimScenario scenario;
    scenario.n = 30;
    scenario.T = 8;
    scenario.seed = 66;
    Panel p = simulate_panel(scenario);
    FitResult fit = fit_saturated(p, 2);
    FitResult back = FitResult::from_json(fit.to_json());
    CHECK(back.beta.isApprox(fit.beta));
    CHECK(back.vcov.at("CR3").isApprox(fit.vcov.at("CR3")));
    CHECK(back.feature_names == fit.feature_names);
    CHECK(back.n_subjects == fit.n_subjects);
    CHECK(back.converged == fit.converged);
}

TEST_CASE("low-rank CR2/CR3 match the dense leverage computation") {
    // Small weighted identity-link design, computed both ways.
    Rng rng(2024, 5);
    const int n_clusters = 6, rows_per = 4, q = 2;
    DesignMatrix d;
    d.X.resize(n_clusters * rows_per, q);
    d.y.resize(n_clusters * rows_per);
    d.w.resize(n_clusters * rows_per);
    for (int c = 0; c < n_clusters; ++c) {
        for (int r = 0; r < rows_per; ++r) {
            int i = c * rows_per + r;
            d.X(i, 0) = 1.0;
            d.X(i, 1) = rng.normal();
            d.y[i] = 0.5 + 0.8 * d.X(i, 1) + rng.normal();
            d.w[i] = (r == 1) ? 0.0 : 0.5 + rng.uniform();  // includes zero weights
            d.cluster.push_back(c);
            d.regime.push_back(-1);
        }
        d.cluster_ids.push_back("c" + std::to_string(c));
    }
    d.feature_names = {"(Intercept)", "x"};

    // The solver only needs the model for its link and width; the design
    // matrix itself is handmade above.
    WorkingModel model;
    model.features.push_back({});
    Feature slope;
    slope.kind = Feature::Kind::dose_linear;
    model.features.push_back(slope);
    FitResult fit = solve_beta(d, model, {});

    // Dense reference: S = sum_c Xc' Wc Xc; Hc = Wc^{1/2} Xc S^{-1} Xc' Wc^{1/2};
    // phi*_c = Xc' Wc^{1/2} (I-Hc)^{-p} Wc^{1/2} ec with p = 1/2 (CR2), 1 (CR3).
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(q, q);
    for (int i = 0; i < d.X.rows(); ++i)
        S += d.w[i] * d.X.row(i).transpose() * d.X.row(i);
    Eigen::MatrixXd S_inv = S.inverse();
    Eigen::MatrixXd B_inv = fit.B_hat.inverse();
    Eigen::MatrixXd meat2 = Eigen::MatrixXd::Zero(q, q);
    Eigen::MatrixXd meat3 = Eigen::MatrixXd::Zero(q, q);
    for (int c = 0; c < n_clusters; ++c) {
        Eigen::MatrixXd Xc = d.X.block(c * rows_per, 0, rows_per, q);
        Eigen::VectorXd wc = d.w.segment(c * rows_per, rows_per);
        Eigen::VectorXd ec = d.y.segment(c * rows_per, rows_per) - Xc * fit.beta;
        Eigen::MatrixXd Whalf = wc.cwiseSqrt().asDiagonal();
        Eigen::MatrixXd H = Whalf * Xc * S_inv * Xc.transpose() * Whalf;
        Eigen::MatrixXd ImH = Eigen::MatrixXd::Identity(rows_per, rows_per) - H;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ImH);
        Eigen::MatrixXd inv_sqrt = es.eigenvectors() *
                                   es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                                   es.eigenvectors().transpose();
        Eigen::VectorXd phi2 = Xc.transpose() * Whalf * (inv_sqrt * (Whalf * ec));
        Eigen::VectorXd phi3 = Xc.transpose() * Whalf * (ImH.inverse() * (Whalf * ec));
        meat2 += phi2 * phi2.transpose();
        meat3 += phi3 * phi3.transpose();
    }
    meat2 /= n_clusters;
    meat3 /= n_clusters;
    Eigen::MatrixXd v2 = B_inv * meat2 * B_inv / n_clusters;
    Eigen::MatrixXd v3 = B_inv * meat3 * B_inv / n_clusters;
    CHECK((fit.vcov.at("CR2") - v2).norm() / v2.norm() < 1e-10);
    CHECK((fit.vcov.at("CR3") - v3).norm() / v3.norm() < 1e-10);
}
