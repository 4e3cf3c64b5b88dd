// Dome base profile, C^2 bump gluing, and the certified spike schedule.

#include <doctest.h>

#include <sobolevlab/spike.hpp>

#include <cmath>
#include <vector>

using namespace sobolevlab;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// Centers spread around a ring inside the annulus, golden-angle spaced so
// supports never collide.
Vec ring_center(int j, double radius = 0.14) {
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  return vec2(radius * std::cos(golden * j), radius * std::sin(golden * j));
}

}  // namespace

TEST_SUITE("spike") {

TEST_CASE("dome slice: limits, confinement margin, domain guards") {
  // Radicand -> 1 toward the apex and -> 0 at the rim.
  CHECK(spike::dome_slice(1e-8).v == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(spike::dome_slice(spike::dome_radius() * (1.0 - 1e-9)).v < 1e-4);

  // At the rim the cone bound still has slack 4 - 2 sqrt(3) > 0 = height.
  const double rim = spike::dome_radius();
  CHECK(spike::cone_height_bound(rim) ==
        doctest::Approx(4.0 - 2.0 * std::sqrt(3.0)).epsilon(1e-14));
  CHECK(spike::cone_height_bound(rim) > spike::dome_slice(rim * (1.0 - 1e-12)).v);

  // Strict confinement across the whole base.
  for (int i = 1; i < 60; ++i) {
    const double rho = rim * i / 60.0;
    CHECK(spike::dome_slice(rho).v < spike::cone_height_bound(rho));
  }

  CHECK_THROWS_AS((void)spike::dome_slice(0.0), std::domain_error);
  CHECK_THROWS_AS((void)spike::dome_slice(rim + 1e-6), std::domain_error);
}

TEST_CASE("dome slice derivatives agree with finite differences") {
  const double h = 1e-6;
  for (double rho : {0.05, 0.12, 0.2}) {
    const Jet3 f = spike::dome_slice(rho);
    const Jet3 fp = spike::dome_slice(rho + h), fm = spike::dome_slice(rho - h);
    CHECK(f.d1 == doctest::Approx((fp.v - fm.v) / (2.0 * h)).epsilon(1e-7));
    CHECK(f.d2 == doctest::Approx((fp.v - 2.0 * f.v + fm.v) / (h * h)).epsilon(1e-4));
    CHECK(f.d3 == doctest::Approx((fp.d2 - fm.d2) / (2.0 * h)).epsilon(1e-4));
    CHECK(f.d2 < 0.0);  // strictly concave slice
  }
}

TEST_CASE("bump shape: seams match value and two derivatives") {
  const double tau = 0.1;
  const double shift = 1e-13;

  // Quartic cap against the core 1 - t - t^2 at t = tau.
  const Jet3 cap = spike::bump_slice(tau - shift, tau);
  CHECK(std::abs(cap.v - (1.0 - tau - tau * tau)) < 1e-10);
  CHECK(std::abs(cap.d1 - (-1.0 - 2.0 * tau)) < 1e-10);
  CHECK(std::abs(cap.d2 - (-2.0)) < 1e-8);

  // Core against the landing tail at t = 1/2.
  const Jet3 core = spike::bump_slice(0.5 - shift, tau);
  const Jet3 tail = spike::bump_slice(0.5 + shift, tau);
  CHECK(std::abs(core.v - tail.v) < 1e-10);
  CHECK(std::abs(core.d1 - tail.d1) < 1e-10);
  CHECK(std::abs(core.d2 - tail.d2) < 1e-8);

  // Tail lands at zero with two flat derivatives at t = 3/4.
  const Jet3 land = spike::bump_slice(0.75 - shift, tau);
  CHECK(std::abs(land.v) < 1e-10);
  CHECK(std::abs(land.d1) < 1e-9);
  CHECK(std::abs(land.d2) < 1e-7);
  CHECK(spike::bump_slice(0.75, tau).v == 0.0);

  // Shape stays within [0, 1] and is monotone decreasing outside the cap.
  double prev = 2.0;
  for (int i = 0; i <= 100; ++i) {
    const double t = 0.75 * i / 100.0;
    const double v = spike::bump_slice(t, tau).v;
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    if (t >= tau) CHECK(v <= prev + 1e-12);
    prev = v;
  }

  CHECK_THROWS_AS((void)spike::bump_slice(0.3, 0.6), std::invalid_argument);
  CHECK_THROWS_AS((void)spike::bump_slice(-0.1, 0.1), std::invalid_argument);
}

TEST_CASE("bump evaluation: apex value, support, parameter guard") {
  spike::SpikeBump b;
  b.center = vec2(0.1, 0.0);
  b.eps = 0.04;
  b.eta = 1.0;
  b.delta = 1e-6 * b.eps;  // tiny smoothing: apex value within 3 tau / 8 of 1
  CHECK(spike::spike_bump(b, b.center) == doctest::Approx(1.0).epsilon(1e-6));

  b.delta = 0.125 * b.eps;
  CHECK(spike::spike_bump(b, vec2(0.1 + 0.8 * b.eps, 0.0)) == 0.0);
  CHECK(spike::spike_bump(b, vec2(0.1 + 2.0 * b.eps, 0.0)) == 0.0);
  CHECK(spike::spike_bump(b, vec2(0.1 + 0.3 * b.eps, 0.0)) > 0.0);

  b.delta = 0.6 * b.eps;
  CHECK_THROWS_AS((void)spike::spike_bump(b, b.center), std::invalid_argument);
}

TEST_CASE("profile evaluation: support locality and zero-amplitude limit") {
  spike::SpikeProfile base = spike::make_spike_profile(0.06, 0.22, 4e-5);
  spike::SpikeProfile one = base;
  spike::SpikeBump b;
  b.center = ring_center(0);
  b.eps = 0.03;
  b.eta = 2e-5;
  b.delta = 0.125 * b.eps;
  one.bumps.push_back(b);

  // Outside the support ball the profile equals the bare dome exactly.
  for (const Vec& x : {vec2(0.04, 0.01), vec2(0.0, 0.24), vec2(-0.14, 0.02)}) {
    if ((x - b.center).norm() >= 0.75 * b.eps)
      CHECK(spike::profile_value(one, x) == spike::dome_slice(x.norm()).v);
  }
  // Inside it sits strictly above the dome.
  CHECK(spike::profile_value(one, b.center) >
        spike::dome_slice(b.center.norm()).v);

  spike::SpikeProfile zero = base;
  b.eta = 0.0;
  zero.bumps.push_back(b);
  for (const Vec& x : {b.center, vec2(0.13, 0.01), vec2(0.1, -0.1)})
    CHECK(spike::profile_value(zero, x) == spike::dome_slice(x.norm()).v);
}

TEST_CASE("spiked profile derivatives agree with finite differences") {
  spike::SpikeProfile sp = spike::make_spike_profile(0.06, 0.22, 4e-5);
  sp = spike::add_spike_with_eta(sp, ring_center(0), 0.03, 2e-5);
  const geo::Profile prof = spike::to_profile(sp);

  const Vec x = ring_center(0) + vec2(0.008, -0.006);  // inside the bump support
  const double h = 1e-6;
  const Vec g = prof.grad(x);
  const Mat H = prof.hess(x);
  for (int k = 0; k < 2; ++k) {
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    CHECK(g[k] == doctest::Approx((prof.value(xp) - prof.value(xm)) / (2.0 * h)).epsilon(1e-6));
    const Vec dg = (prof.grad(xp) - prof.grad(xm)) / (2.0 * h);
    CHECK((H.col(k) - dg).norm() < 1e-4);
  }
}

TEST_CASE("certificate: bare dome passes, coarse steps are rejected") {
  const spike::SpikeProfile base = spike::make_spike_profile(0.06, 0.22);
  const spike::ConcavityCertificate cert = spike::certify_concavity(base, 1.0 / 256.0);
  CHECK(cert.valid());
  CHECK(cert.concavity_margin > 0.0);
  CHECK(cert.confinement_margin > 0.0);
  CHECK(cert.grid_points > 10000);
  CHECK(cert.skipped <= cert.grid_points / 100);

  spike::SpikeProfile sp = base;
  spike::SpikeBump b;
  b.center = ring_center(0);
  b.eps = 0.03;
  b.eta = 1e-5;
  b.delta = 0.125 * b.eps;
  sp.bumps.push_back(b);
  CHECK_THROWS_AS((void)spike::certify_concavity(sp, 2.0 * b.delta), std::invalid_argument);
  CHECK_THROWS_AS((void)spike::certify_concavity(base, 0.0), std::invalid_argument);
}

TEST_CASE("backtracking construction: amplitudes follow the halving schedule") {
  spike::SpikeProfile sp = spike::make_spike_profile(0.06, 0.22, 4e-5);
  for (int j = 0; j < 3; ++j) sp = spike::add_spike(sp, ring_center(j), 0.03);
  REQUIRE(sp.bumps.size() == 3);

  double total = 0.0;
  for (std::size_t k = 0; k < sp.bumps.size(); ++k) {
    // Start value eta_bar 2^{-(k+1)}, halved only downward.
    CHECK(sp.bumps[k].eta <= sp.eta_bar * std::pow(2.0, -static_cast<double>(k + 1)) + 1e-18);
    CHECK(sp.bumps[k].eta > 0.0);
    total += sp.bumps[k].eta;
  }
  CHECK(total <= 2.0 * sp.eta_bar);  // geometric schedule stays summable

  // Every accepted profile certifies and respects the cone bound.
  const spike::ConcavityCertificate cert =
      spike::certify_concavity(sp, 0.4 * sp.bumps[0].delta);
  CHECK(cert.valid());

  // The base is reproduced exactly outside the annulus.
  for (double rho : {0.04, 0.25}) {
    const Vec x = vec2(rho, 0.0);
    CHECK(spike::profile_value(sp, x) == spike::dome_slice(rho).v);
  }
}

TEST_CASE("construction guards: annulus walls, collisions, amplitude floor") {
  spike::SpikeProfile sp = spike::make_spike_profile(0.06, 0.22, 4e-5);
  CHECK_THROWS_AS((void)spike::add_spike(sp, vec2(0.07, 0.0), 0.03), std::invalid_argument);
  CHECK_THROWS_AS((void)spike::add_spike(sp, vec2(0.3, 0.0), 0.03), std::invalid_argument);

  sp = spike::add_spike(sp, ring_center(0), 0.03);
  CHECK_THROWS_AS((void)spike::add_spike(sp, ring_center(0) + vec2(0.01, 0.0), 0.03),
                  std::invalid_argument);

  // A prescribed amplitude far beyond the concavity budget is refused with
  // the failing constraint named.
  try {
    (void)spike::add_spike_with_eta(sp, ring_center(1), 0.03, 0.5);
    CHECK_MESSAGE(false, "oversized amplitude must not certify");
  } catch (const spike::ConstructionError& e) {
    CHECK(e.failing_constraint == "concavity");
  }

  CHECK_THROWS_AS((void)spike::add_spike_with_eta(sp, ring_center(1), 0.03, -1.0),
                  std::invalid_argument);

  CHECK_THROWS_AS((void)spike::make_spike_profile(0.1, 0.3), std::invalid_argument);
  CHECK_THROWS_AS((void)spike::make_spike_profile(0.2, 0.1), std::invalid_argument);
}

TEST_CASE("prescribed amplitudes: exact bookkeeping for fixed budgets") {
  spike::SpikeProfile sp = spike::make_spike_profile(0.06, 0.22, 4e-5);
  const double eta = 2e-5;
  for (int j = 0; j < 4; ++j) sp = spike::add_spike_with_eta(sp, ring_center(j), 0.03, eta);
  REQUIRE(sp.bumps.size() == 4);
  double total = 0.0;
  for (const auto& b : sp.bumps) {
    CHECK(b.eta == eta);
    total += b.eta;
  }
  CHECK(total == 4.0 * eta);  // equal doubles sum exactly
}

TEST_CASE("uniform closeness: truncating the schedule moves values by at most the tail") {
  spike::SpikeProfile sp = spike::make_spike_profile(0.06, 0.22, 4e-5);
  for (int j = 0; j < 4; ++j) sp = spike::add_spike_with_eta(sp, ring_center(j), 0.03, 2e-5);

  spike::SpikeProfile head = sp;
  head.bumps.resize(2);
  double tail = 0.0;
  for (std::size_t k = 2; k < sp.bumps.size(); ++k) tail += sp.bumps[k].eta;

  double max_diff = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double rho = 0.07 + 0.14 * halton(i, 2);
    const double ang = 2.0 * kPi * halton(i, 3);
    const Vec x = vec2(rho * std::cos(ang), rho * std::sin(ang));
    const double d = std::abs(spike::profile_value(sp, x) - spike::profile_value(head, x));
    CHECK(d <= tail + 1e-15);
    max_diff = std::max(max_diff, d);
  }
  // The bound is attained near a truncated bump's apex.
  const double at_apex =
      std::abs(spike::profile_value(sp, sp.bumps[3].center) -
               spike::profile_value(head, sp.bumps[3].center));
  CHECK(at_apex > 0.9 * sp.bumps[3].eta * (1.0 - 3.0 * 0.125 / 8.0));
}

TEST_CASE("graph distances: identical profiles give unit ratio, spikes stay bilipschitz") {
  spike::SpikeProfile base = spike::make_spike_profile(0.06, 0.22, 4e-5);
  const spike::BilipschitzReport same =
      spike::bilipschitz_estimate(base, base, 0.07, 0.21, 41, 5);
  CHECK(same.ratio_min == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(same.ratio_max == doctest::Approx(1.0).epsilon(1e-12));

  spike::SpikeProfile spiked = base;
  for (int j = 0; j < 3; ++j) spiked = spike::add_spike_with_eta(spiked, ring_center(j), 0.03, 2e-5);
  const spike::BilipschitzReport rep =
      spike::bilipschitz_estimate(base, spiked, 0.07, 0.21, 41, 5);
  CHECK(rep.ratio_min > 0.5);
  CHECK(rep.ratio_max < 2.0);
  CHECK(rep.ratio_min <= rep.ratio_max);
  CHECK(std::isfinite(rep.ratio_max));
}

TEST_CASE("schedule serialization round trip") {
  spike::SpikeProfile sp = spike::make_spike_profile(0.06, 0.22, 4e-5);
  for (int j = 0; j < 2; ++j) sp = spike::add_spike_with_eta(sp, ring_center(j), 0.03, 2e-5);

  const spike::SpikeProfile back = spike::spike_profile_from_json(spike::spike_profile_to_json(sp));
  CHECK(back.annulus_lo == sp.annulus_lo);
  CHECK(back.annulus_hi == sp.annulus_hi);
  CHECK(back.eta_bar == sp.eta_bar);
  REQUIRE(back.bumps.size() == sp.bumps.size());
  for (std::size_t k = 0; k < sp.bumps.size(); ++k) {
    CHECK((back.bumps[k].center - sp.bumps[k].center).norm() == 0.0);
    CHECK(back.bumps[k].eps == sp.bumps[k].eps);
    CHECK(back.bumps[k].eta == sp.bumps[k].eta);
    CHECK(back.bumps[k].delta == sp.bumps[k].delta);
  }

  const Vec probe = ring_center(0) + vec2(0.005, 0.004);
  CHECK(spike::profile_value(back, probe) == spike::profile_value(sp, probe));
}

TEST_CASE("support-scale suggestion respects walls and earlier centers") {
  spike::SpikeProfile sp = spike::make_spike_profile(0.06, 0.22, 4e-5);
  const Vec y = vec2(0.14, 0.0);
  // Empty schedule: half the distance to the nearest wall.
  CHECK(spike::suggest_scale(sp, y) == doctest::Approx(0.5 * 0.08).epsilon(1e-12));

  sp = spike::add_spike_with_eta(sp, vec2(0.0, 0.14), 0.03, 2e-5);
  const double d_center = (y - vec2(0.0, 0.14)).norm();
  CHECK(spike::suggest_scale(sp, y) ==
        doctest::Approx(0.5 * std::min(0.08, d_center)).epsilon(1e-12));

  // The suggestion is always admissible for add_spike's separation checks.
  const double eps = spike::suggest_scale(sp, y);
  CHECK(y.norm() - eps > sp.annulus_lo);
  CHECK(y.norm() + eps < sp.annulus_hi);

  // Graph-chart wrappers refuse annuli sticking out of the smooth base.
  CHECK_THROWS_AS((void)spike::to_graph_chart(sp, 0.03, 0.5), std::invalid_argument);
}

}  // TEST_SUITE
