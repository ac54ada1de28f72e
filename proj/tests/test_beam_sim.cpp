#include "generators.hpp"

#include "vibestep/beam_sim.hpp"
#include "vibestep/experiment.hpp"
#include "vibestep/features.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace vibestep;

namespace {

constexpr double kPi = std::numbers::pi;

BeamModel undamped(int modes) {
  BeamModel b = wood_structure().beam;
  b.damping_per_s = 0.0;
  b.n_modes = modes;
  return b;
}

ForceEvent impulse(double x, double onset = 0.01, double amplitude = 100.0) {
  ForceEvent f;
  f.location_m = x;
  f.amplitude_n = amplitude;
  f.pulse.duration_s = 0.002;
  f.onset_s = onset;
  return f;
}

// Response of mode n alone, isolated as the difference of n and n - 1 mode sums.
std::vector<double> single_mode(int n, double fs, double duration) {
  const auto f = impulse(1.3);
  const auto upper = modal_response(undamped(n), f, 2.9, fs, duration);
  if (n == 1) return upper.samples;
  const auto lower = modal_response(undamped(n - 1), f, 2.9, fs, duration);
  std::vector<double> out(upper.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = upper.samples[i] - lower.samples[i];
  return out;
}

std::size_t peak_bin(const std::vector<double>& x) {
  const auto p = power_spectrum(x);
  return static_cast<std::size_t>(std::max_element(p.begin() + 1, p.end()) - p.begin());
}

}  // namespace

TEST_SUITE("beam-sim") {
  TEST_CASE("natural frequencies follow (n pi / L)^2 sqrt(EI / rho A)") {
    const BeamModel b = wood_structure().beam;
    const double c = std::sqrt(b.youngs_modulus_pa * b.second_moment_m4 / (b.density_kg_m3 * b.area_m2));
    for (int n = 1; n <= 8; ++n) {
      const double k = n * kPi / b.length_m;
      CHECK(b.natural_frequency_rad_s(n) == doctest::Approx(k * k * c).epsilon(1e-14));
      CHECK(b.natural_frequency_rad_s(n) / b.natural_frequency_rad_s(1) == doctest::Approx(n * n).epsilon(1e-12));
    }
    CHECK(b.mode_shape(2, b.length_m / 4) == doctest::Approx(1.0));
    CHECK(std::abs(b.mode_shape(2, b.length_m / 2)) < 1e-12);
  }

  TEST_CASE("undamped single-mode spectral peak sits within one bin of omega_n") {
    const double fs = 2000.0, duration = 20.0;
    for (int n = 1; n <= 5; ++n) {
      const auto x = single_mode(n, fs, duration);
      const double bin_hz = fs / static_cast<double>(x.size());
      const double expected_hz = undamped(n).natural_frequency_rad_s(n) / (2.0 * kPi);
      REQUIRE(expected_hz < 0.5 * fs);
      CHECK(std::abs(static_cast<double>(peak_bin(x)) * bin_hz - expected_hz) <= bin_hz);
    }
  }

  TEST_CASE("response is linear in the forces") {
    gen::Rng rng(21);
    const BeamModel beam = concrete_structure().beam;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<ForceEvent> forces;
      const int count = rng.integer(1, 4);
      for (int i = 0; i < count; ++i) {
        auto f = impulse(rng.uniform(0.2, 6.8), rng.uniform(0.0, 0.5), rng.uniform(10.0, 900.0));
        f.pulse.duration_s = rng.uniform(0.003, 0.08);
        forces.push_back(f);
      }
      const double sensor = rng.uniform(0.3, 6.7);
      AttenuationModel att{rng.uniform(0.0, 1e-3)};
      const auto together = modal_response(beam, forces, sensor, 1000.0, 1.0, att, SensorQuantity::Velocity);
      std::vector<double> sum(together.size(), 0.0);
      for (const auto& f : forces) {
        const auto one = modal_response(beam, f, sensor, 1000.0, 1.0, att, SensorQuantity::Velocity);
        for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += one.samples[k];
      }
      const double scale = rng.uniform(0.1, 10.0);
      auto scaled_forces = forces;
      for (auto& f : scaled_forces) f.amplitude_n *= scale;
      const auto scaled = modal_response(beam, scaled_forces, sensor, 1000.0, 1.0, att, SensorQuantity::Velocity);

      double peak = 0.0, err_sum = 0.0, err_scale = 0.0;
      for (std::size_t k = 0; k < sum.size(); ++k) {
        peak = std::max(peak, std::abs(together.samples[k]));
        err_sum = std::max(err_sum, std::abs(together.samples[k] - sum[k]));
        err_scale = std::max(err_scale, std::abs(scaled.samples[k] - scale * together.samples[k]));
      }
      REQUIRE(peak > 0.0);
      CHECK(err_sum <= 1e-12 * peak);
      CHECK(err_scale <= 1e-12 * scale * peak);
    }
  }

  TEST_CASE("response is causal") {
    gen::Rng rng(22);
    const BeamModel beam = wood_structure().beam;
    for (int trial = 0; trial < 20; ++trial) {
      const double onset = rng.uniform(0.05, 0.5);
      const auto f = impulse(rng.uniform(0.2, 6.8), onset, rng.uniform(10.0, 900.0));
      const auto t = modal_response(beam, f, rng.uniform(0.3, 6.7), 2000.0, 1.0, {}, SensorQuantity::Velocity);
      const auto first = static_cast<std::size_t>(std::floor(onset * 2000.0));
      for (std::size_t k = 0; k <= first; ++k) REQUIRE(t.samples[k] == 0.0);
      CHECK(std::any_of(t.samples.begin(), t.samples.end(), [](double v) { return v != 0.0; }));
    }
  }

  TEST_CASE("attenuation scales mode n by exp(-alpha l omega_n / 2)") {
    const AttenuationModel att{3e-4};
    CHECK(att.factor(100.0, 0.0) == 1.0);
    CHECK(att.factor(100.0, 2.0) == doctest::Approx(std::exp(-0.5 * 3e-4 * 2.0 * 100.0)));
    BeamModel one = undamped(1);
    const auto f = impulse(1.0);
    const auto plain = modal_response(one, f, 5.0, 1000.0, 0.5);
    const auto damped = modal_response(one, f, 5.0, 1000.0, 0.5, att);
    const double expected = att.factor(one.natural_frequency_rad_s(1), 4.0);
    for (std::size_t k = 0; k < plain.size(); ++k) CHECK(damped.samples[k] == doctest::Approx(expected * plain.samples[k]));
  }

  TEST_CASE("apply_attenuation scales bands by their centre frequency") {
    FeatureVector f;
    f.values = VectorXd::Constant(3, 2.0);
    f.band_edges_hz = {10.0, 20.0, 40.0, 80.0};
    const AttenuationModel att{1e-3};
    const auto g = apply_attenuation(f, att, 3.0);
    CHECK(g.values(0) == doctest::Approx(2.0 * std::exp(-0.5 * 1e-3 * 3.0 * 2.0 * kPi * 15.0)));
    CHECK(g.values(2) == doctest::Approx(2.0 * std::exp(-0.5 * 1e-3 * 3.0 * 2.0 * kPi * 60.0)));
    CHECK(apply_attenuation(f, att, 0.0) == f);
    CHECK_THROWS_AS(apply_attenuation(f, att, -1.0), ConfigError);
  }

  TEST_CASE("invalid inputs are configuration errors") {
    BeamModel b = wood_structure().beam;
    const auto f = impulse(1.0);
    CHECK_THROWS_AS(modal_response(b, f, 0.0, 1000.0, 1.0), ConfigError);
    CHECK_THROWS_AS(modal_response(b, impulse(7.5), 3.0, 1000.0, 1.0), ConfigError);
    CHECK_THROWS_AS(modal_response(b, f, 3.0, 0.0, 1.0), ConfigError);
    b.n_modes = 0;
    CHECK_THROWS_AS(modal_response(b, f, 3.0, 1000.0, 1.0), ConfigError);
    b = wood_structure().beam;
    b.youngs_modulus_pa = -1.0;
    CHECK_THROWS_AS(b.validate(), ConfigError);
    CHECK_THROWS_AS(location_grid(b, 0), ConfigError);
  }

  TEST_CASE("walks are deterministic in the seed") {
    const auto st = wood_structure();
    const auto gait = make_population(3, 1).front();
    const SensorLayout sensors{{0.5, 2.5}};
    const auto a = simulate_walk(st.beam, st.attenuation, gait, sensors, 0.7, 99);
    const auto b = simulate_walk(st.beam, st.attenuation, gait, sensors, 0.7, 99);
    const auto c = simulate_walk(st.beam, st.attenuation, gait, sensors, 0.7, 100);
    CHECK(a.traces[1].samples == b.traces[1].samples);
    CHECK(a.traces[1].samples != c.traces[1].samples);
    REQUIRE(!a.steps.empty());
    for (std::size_t i = 1; i < a.steps.size(); ++i) CHECK(a.steps[i].onset_s > a.steps[i - 1].onset_s);
    for (const auto& s : a.steps) {
      CHECK(s.location_m > 0.0);
      CHECK(s.location_m < st.beam.length_m);
    }
  }

  TEST_CASE("noiseless ball drops at two locations differ by a near-constant band ratio") {
    const auto st = concrete_structure();
    const SensorLayout sensors{{0.5}};
    const double at[] = {2.0, 5.0};
    const auto drops = ball_drop_sequence(st.beam, st.attenuation, at, 5, sensors, 31);
    REQUIRE(drops.size() == 10);
    FeatureSpec spec = FeatureSpec::defaults(2000.0, 16, 20.0);
    std::vector<VectorXd> a, b;
    for (const auto& d : drops) {
      const auto& trace = d.simulation.traces.front();
      const auto events = detect_footsteps(trace, spec);
      REQUIRE(events.size() == 1);
      (d.location_index == 0 ? a : b).push_back(extract_features(trace, events.front(), spec).values);
    }
    std::vector<VectorXd> ratios;
    for (std::size_t r = 0; r < a.size(); ++r) ratios.push_back(a[r].cwiseQuotient(b[r]));
    for (Eigen::Index i = 0; i < ratios.front().size(); ++i) {
      double mean = 0.0, sq = 0.0;
      for (const auto& r : ratios) mean += r(i);
      mean /= static_cast<double>(ratios.size());
      for (const auto& r : ratios) sq += (r(i) - mean) * (r(i) - mean);
      const double cv = std::sqrt(sq / static_cast<double>(ratios.size())) / mean;
      CHECK(cv < 0.05);
    }
  }
}
