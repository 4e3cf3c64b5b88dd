// Iterated-log weight, radial cut-off family, and overflow-safe norms on
// rotationally symmetric models.

#include <doctest.h>

#include <sobolevlab/cutoff.hpp>

#include <cmath>
#include <vector>

using namespace sobolevlab;

TEST_SUITE("cutoff") {

TEST_CASE("iterated-log weight: exact product values and positivity") {
  const double e2 = std::exp(2.0);
  CHECK(cutoff::lambda_product(1, e2) == doctest::Approx(2.0 * e2).epsilon(1e-13));

  const double ee = std::exp(std::exp(1.0));
  CHECK(cutoff::lambda_product(2, ee) ==
        doctest::Approx(std::exp(std::exp(1.0) + 1.0)).epsilon(1e-13));

  for (int K : {0, 1, 2}) {
    const cutoff::LambdaSpec s = cutoff::LambdaSpec::make(K);
    for (double t : {0.0, 0.5 * s.t0, s.t0, 10.0 * s.t0}) CHECK(cutoff::lambda_eval(s, t) > 0.0);
  }
}

TEST_CASE("weight extension joins the product with two matched derivatives") {
  for (int K : {1, 2}) {
    const cutoff::LambdaSpec s = cutoff::LambdaSpec::make(K);
    const Jet3 below = cutoff::lambda_jet(s, s.t0 * (1.0 - 1e-12));
    const Jet3 above = cutoff::lambda_product_jet(K, s.t0);
    CHECK(below.v == doctest::Approx(above.v).epsilon(1e-9));
    CHECK(below.d1 == doctest::Approx(above.d1).epsilon(1e-7));
    CHECK(below.d2 == doctest::Approx(above.d2).epsilon(1e-5));
  }

  // Jet derivatives of the product against plain finite differences.
  const double t = 30.0, h = 1e-4;
  const Jet3 j = cutoff::lambda_product_jet(1, t);
  CHECK(j.d1 == doctest::Approx((cutoff::lambda_product(1, t + h) -
                                 cutoff::lambda_product(1, t - h)) /
                                (2.0 * h))
                    .epsilon(1e-7));
  CHECK(j.d2 == doctest::Approx((cutoff::lambda_product(1, t + h) - 2.0 * j.v +
                                 cutoff::lambda_product(1, t - h)) /
                                (h * h))
                    .epsilon(1e-5));
}

TEST_CASE("weight antiderivative: closed form above t0 and a working inverse") {
  const cutoff::LambdaSpec s = cutoff::LambdaSpec::make(1);
  // Above t0 the antiderivative of 1/(t ln t) is ln(ln(t)).
  for (double r : {s.t0, 2.0 * s.t0, 100.0, 5000.0}) {
    const double want = s.A_t0 + std::log(std::log(r)) - std::log(std::log(s.t0));
    CHECK(cutoff::A_of(s, r) == doctest::Approx(want).epsilon(1e-12));
    CHECK(cutoff::A_inverse(s, cutoff::A_of(s, r)) == doctest::Approx(r).epsilon(1e-9));
  }
  CHECK(cutoff::A_of(s, 0.0) == 0.0);
  CHECK(cutoff::A_of(s, 120.0) > cutoff::A_of(s, 80.0));
  CHECK_THROWS_AS((void)cutoff::A_inverse(s, 0.5 * s.A_t0), std::domain_error);
}

TEST_CASE("transition shape: range, plateau values, extreme derivatives") {
  CHECK(cutoff::shape_jet(-0.1).v == 1.0);
  CHECK(cutoff::shape_jet(0.0).v == 1.0);
  CHECK(cutoff::shape_jet(1.0).v == 0.0);
  CHECK(cutoff::shape_jet(1.3).v == 0.0);

  // |eta'| peaks at 15/8 in the middle of the transition.
  CHECK(std::abs(cutoff::shape_jet(0.5).d1) ==
        doctest::Approx(cutoff::shape_d1_max()).epsilon(1e-14));
  // |eta''| peaks at 10/sqrt(3) at t = 1/2 +- 1/(2 sqrt 3).
  const double tstar = 0.5 - 0.5 / std::sqrt(3.0);
  CHECK(std::abs(cutoff::shape_jet(tstar).d2) ==
        doctest::Approx(cutoff::shape_d2_max()).epsilon(1e-12));

  double sup1 = 0.0, sup2 = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const Jet3 j = cutoff::shape_jet(i / 2000.0);
    CHECK(j.v >= 0.0);
    CHECK(j.v <= 1.0);
    sup1 = std::max(sup1, std::abs(j.d1));
    sup2 = std::max(sup2, std::abs(j.d2));
  }
  CHECK(sup1 <= cutoff::shape_d1_max() + 1e-12);
  CHECK(sup2 <= cutoff::shape_d2_max() + 1e-12);
  CHECK(sup1 > 0.99 * cutoff::shape_d1_max());
  CHECK(sup2 > 0.99 * cutoff::shape_d2_max());
}

TEST_CASE("cut-off structure: plateau, support radius closed form, monotone family") {
  const cutoff::LambdaSpec s = cutoff::LambdaSpec::make(1);
  const double R = 10.0;
  const cutoff::Cutoff chi = cutoff::build_cutoff(s, R);

  CHECK(chi.value(0.0) == 1.0);
  CHECK(chi.value(0.5 * R) == 1.0);
  CHECK(chi.value(R) == 1.0);

  // A(r) - A(R) = ln ln r - ln ln R = 1 solves to r = R^e for K = 1.
  CHECK(chi.r_support == doctest::Approx(std::pow(R, std::exp(1.0))).epsilon(1e-9));
  CHECK(chi.value(chi.r_support * (1.0 + 1e-9)) == 0.0);
  CHECK(chi.value(2.0 * chi.r_support) == 0.0);

  // Strictly inside the band the value is strictly between the plateaus and
  // decreasing in r.
  double prev = 1.0;
  for (int i = 1; i < 40; ++i) {
    const double r = cutoff::A_inverse(s, chi.A_R + i / 40.0);
    const double v = chi.value(r);
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }

  // Wider plateaus dominate pointwise.
  const cutoff::Cutoff wide = cutoff::build_cutoff(s, 2.0 * R);
  for (int i = 0; i <= 60; ++i) {
    const double r = 1.0 + i * (1.1 * wide.r_support) / 60.0;
    CHECK(chi.value(r) <= wide.value(r) + 1e-15);
  }

  CHECK_THROWS_AS((void)cutoff::build_cutoff(s, 0.5 * s.t0), std::invalid_argument);
}

TEST_CASE("cut-off derivatives: jets match finite differences in the band") {
  const cutoff::LambdaSpec s = cutoff::LambdaSpec::make(1);
  const cutoff::Cutoff chi = cutoff::build_cutoff(s, 12.0);
  for (double frac : {0.2, 0.5, 0.8}) {
    const double r = cutoff::A_inverse(s, chi.A_R + frac);
    const double h = 1e-4 * r;
    const Jet3 j = chi.jet(r);
    CHECK(j.v == chi.value(r));
    const double fd1 = (chi.value(r + h) - chi.value(r - h)) / (2.0 * h);
    CHECK(j.d1 == doctest::Approx(fd1).epsilon(1e-6));
    const double fd2 = (chi.jet(r + h).d1 - chi.jet(r - h).d1) / (2.0 * h);
    CHECK(j.d2 == doctest::Approx(fd2).epsilon(1e-5));
  }
}

TEST_CASE("gradient bound: |chi'| lambda never exceeds the shape derivative peak") {
  const cutoff::LambdaSpec s = cutoff::LambdaSpec::make(1);
  for (double R : {10.0, 25.0, 80.0}) {
    const cutoff::Cutoff chi = cutoff::build_cutoff(s, R);
    for (int i = 1; i < 200; ++i) {
      const double r = cutoff::A_inverse(s, chi.A_R + i / 200.0);
      CHECK(std::abs(chi.jet(r).d1) * cutoff::lambda_eval(s, r) <=
            cutoff::shape_d1_max() + 1e-10);
    }
    // Attained at the middle of the transition: chi' = eta'(1/2)/lambda there.
    const double rmid = cutoff::A_inverse(s, chi.A_R + 0.5);
    CHECK(std::abs(chi.jet(rmid).d1) * cutoff::lambda_eval(s, rmid) ==
          doctest::Approx(cutoff::shape_d1_max()).epsilon(1e-9));
  }
}

TEST_CASE("model manifolds: radial operators on a quadratic test function") {
  // u = r^2 has u'' = 2, u' = 2r; on the hyperbolic plane
  // Delta u = 2 + coth(r) 2 r, on the flat plane Delta u = 4.
  const cutoff::ModelManifold hyp = cutoff::hyperbolic_model(2);
  const cutoff::ModelManifold eu = cutoff::euclidean_model(2);
  for (double r : {0.5, 1.5, 3.0}) {
    const Jet3 u{r * r, 2.0 * r, 2.0, 0.0};
    CHECK(cutoff::RadialOps::laplacian(hyp, r, u) ==
          doctest::Approx(2.0 + 2.0 * r * coth(r)).epsilon(1e-13));
    CHECK(cutoff::RadialOps::laplacian(eu, r, u) == doctest::Approx(4.0).epsilon(1e-13));
    // |Hess u|^2 = u''^2 + (n-1) w^2 u'^2
    const double w = coth(r);
    CHECK(cutoff::RadialOps::hess_norm(hyp, r, u) ==
          doctest::Approx(std::sqrt(4.0 + w * w * 4.0 * r * r)).epsilon(1e-13));
  }
  CHECK(hyp.ricci_radial(2.0) == doctest::Approx(-1.0));
  CHECK(eu.ricci_radial(2.0) == doctest::Approx(0.0));
}

TEST_CASE("curvature bound recording: hyperbolic decays, flat is zero") {
  const cutoff::LambdaSpec s = cutoff::LambdaSpec::make(1);
  const cutoff::RicciBoundRecord hyp =
      cutoff::record_ricci_bound(cutoff::hyperbolic_model(2), s, 10.0, 100.0);
  const double lam10 = cutoff::lambda_eval(s, 10.0);
  CHECK(hyp.finite);
  CHECK(hyp.C == doctest::Approx(1.0 / (lam10 * lam10)).epsilon(1e-12));

  const cutoff::RicciBoundRecord eu =
      cutoff::record_ricci_bound(cutoff::euclidean_model(2), s, 10.0, 100.0);
  CHECK(eu.finite);
  CHECK(eu.C == 0.0);
}

TEST_CASE("sweep verification: gradient sups uniform, laplacian sups decay") {
  const cutoff::LambdaSpec s = cutoff::LambdaSpec::make(1);
  const std::vector<double> sweep{10.0, 20.0, 30.0, 40.0};
  const cutoff::CutoffSweepReport hyp =
      cutoff::verify_cutoff(s, cutoff::hyperbolic_model(2), sweep, 3);

  CHECK(hyp.rows.size() == 4);
  CHECK(hyp.uniform_grad);
  CHECK(hyp.ratio_grad <= 1.0 + 1e-9);  // identical shape sup for every R

  // The laplacian-type sups are dominated by terms ~ 1/lambda(R), so they
  // shrink as R grows: bounded (even vanishing), but not within a factor 2
  // across this sweep.
  for (std::size_t i = 0; i + 1 < hyp.rows.size(); ++i)
    CHECK(hyp.rows[i].sup_lap > hyp.rows[i + 1].sup_lap);
  CHECK(hyp.ratio_lap > 2.0);
  CHECK(std::isfinite(hyp.ratio_lap));
  for (const auto& row : hyp.rows) {
    CHECK(std::isfinite(row.sup_lap));
    CHECK(std::isfinite(row.sup_hess_lambda));
    CHECK(std::isfinite(row.sup_lap_grad));
    // Factored mechanism: every ingredient finite, and together they bound
    // the measured laplacian sup.
    const double bound = cutoff::shape_d2_max() * row.sup_inv_lambda2 +
                         cutoff::shape_d1_max() *
                             (row.sup_dlam_over_lam2 + row.sup_meanc_over_lambda);
    CHECK(std::isfinite(bound));
    CHECK(row.sup_lap <= bound + 1e-12);
  }
  CHECK(hyp.ricci.finite);

  // Flat model: same gradient sups, strictly smaller laplacian sups.
  const cutoff::CutoffSweepReport eu =
      cutoff::verify_cutoff(s, cutoff::euclidean_model(2), sweep, 2);
  CHECK(eu.uniform_grad);
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    CHECK(eu.rows[i].sup_grad_lambda ==
          doctest::Approx(hyp.rows[i].sup_grad_lambda).epsilon(1e-12));
    CHECK(eu.rows[i].sup_lap < hyp.rows[i].sup_lap);
  }

  // A one-point sweep is trivially uniform in every recorded quantity.
  const cutoff::CutoffSweepReport single =
      cutoff::verify_cutoff(s, cutoff::hyperbolic_model(2), {20.0}, 3);
  CHECK(single.uniform_all());
  CHECK(single.ratio_grad == doctest::Approx(1.0));
  CHECK(single.ratio_lap == doctest::Approx(1.0));

  CHECK_THROWS_AS((void)cutoff::verify_cutoff(s, cutoff::hyperbolic_model(2), {}, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)cutoff::verify_cutoff(s, cutoff::hyperbolic_model(2), {1.0}, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)cutoff::verify_cutoff(s, cutoff::hyperbolic_model(2), sweep, 5),
                  std::invalid_argument);
}

TEST_CASE("radial integrals: polynomial and area closed forms") {
  const cutoff::ModelManifold eu = cutoff::euclidean_model(2);
  const cutoff::ModelManifold hyp = cutoff::hyperbolic_model(2);

  // Constant 1 on the flat unit disk: norm = (pi)^{1/p}.
  for (double p : {1.0, 2.0, 3.5}) {
    const double got = cutoff::radial_lp_norm(eu, 0.0, 1.0, p, [](double) { return 0.0; });
    CHECK(got == doctest::Approx(std::pow(kPi, 1.0 / p)).epsilon(1e-9));
  }

  // sqrt(r) on the flat unit disk, p = 2: squared integral 2 pi / 3.
  const double got_sqrt =
      cutoff::radial_lp_norm(eu, 0.0, 1.0, 2.0, [](double r) { return 0.5 * std::log(r); });
  CHECK(got_sqrt == doctest::Approx(std::sqrt(2.0 * kPi / 3.0)).epsilon(1e-9));

  // Constant 1 on a hyperbolic disk: p-th power equals the area.
  for (double rho : {1.0, 2.0}) {
    const double area = 2.0 * kPi * (std::cosh(rho) - 1.0);
    CHECK(cutoff::radial_lp_norm(hyp, 0.0, rho, 1.0, [](double) { return 0.0; }) ==
          doctest::Approx(area).epsilon(1e-9));
    CHECK(cutoff::radial_lp_norm(hyp, 0.0, rho, 2.0, [](double) { return 0.0; }) ==
          doctest::Approx(std::sqrt(area)).epsilon(1e-9));
  }

  CHECK_THROWS_AS(
      (void)cutoff::radial_lp_norm(eu, 0.0, 1.0, 0.5, [](double) { return 0.0; }),
      std::invalid_argument);
}

TEST_CASE("log-space norms survive exponential volume growth") {
  const cutoff::ModelManifold hyp = cutoff::hyperbolic_model(2);
  const double rho = 3000.0;
  const double lg =
      cutoff::radial_lp_norm_log(hyp, 0.0, rho, 1.0, [](double) { return 0.0; }, 6000);
  // ln(2 pi (cosh rho - 1)) = ln(pi) + rho up to an exponentially small term.
  CHECK(lg == doctest::Approx(std::log(kPi) + rho).epsilon(1e-5));
  CHECK(std::isinf(cutoff::radial_lp_norm(hyp, 0.0, rho, 1.0, [](double) { return 0.0; })));

  // Empty interval and identically-zero integrand degrade gracefully.
  CHECK(cutoff::radial_lp_norm(hyp, 2.0, 1.0, 2.0, [](double) { return 0.0; }) == 0.0);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  CHECK(cutoff::radial_lp_norm(hyp, 0.0, 1.0, 2.0, [neg_inf](double) { return neg_inf; }) == 0.0);
}

TEST_CASE("weight serialization round trip") {
  for (int K : {0, 1, 2}) {
    const cutoff::LambdaSpec s = cutoff::LambdaSpec::make(K);
    const cutoff::LambdaSpec back = cutoff::lambda_from_json(cutoff::lambda_to_json(s));
    CHECK(back.K == s.K);
    CHECK(back.t0 == doctest::Approx(s.t0).epsilon(1e-14));
    CHECK(back.lam0 == doctest::Approx(s.lam0).epsilon(1e-14));
    CHECK(back.A_t0 == doctest::Approx(s.A_t0).epsilon(1e-12));
    for (double t : {0.3 * s.t0, s.t0, 4.0 * s.t0})
      CHECK(cutoff::lambda_eval(back, t) == doctest::Approx(cutoff::lambda_eval(s, t)).epsilon(1e-13));
  }
}

}  // TEST_SUITE
