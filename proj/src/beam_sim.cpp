#include "vibestep/beam_sim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

namespace vibestep {

namespace {

constexpr double kPi = std::numbers::pi;

// Exact zero-order-hold discretisation of q'' + eta q' + omega^2 q = u:
//   [q, v]_{k+1} = Phi [q, v]_k + Gamma u_k
struct OscillatorStep {
  double phi00, phi01, phi10, phi11;
  double gamma0, gamma1;
};

OscillatorStep discretize(double omega, double eta, double h) {
  using cd = std::complex<double>;
  const cd disc = std::sqrt(cd(0.25 * eta * eta - omega * omega, 0.0));
  const cd s1 = -0.5 * eta + disc;
  const cd s2 = -0.5 * eta - disc;
  double c0 = 0.0, c1 = 0.0;
  if (std::abs(s1 - s2) <= 1e-9 * std::max(1.0, std::abs(s1))) {
    const double s = -0.5 * eta;
    const double e = std::exp(s * h);
    c0 = e * (1.0 - s * h);
    c1 = e * h;
  } else {
    const cd e1 = std::exp(s1 * h), e2 = std::exp(s2 * h);
    c1 = ((e1 - e2) / (s1 - s2)).real();
    c0 = ((s1 * e2 - s2 * e1) / (s1 - s2)).real();
  }
  const double w2 = omega * omega;
  return {c0, c1, -w2 * c1, c0 - eta * c1, (1.0 - c0) / w2, c1};
}

double normal(std::mt19937_64& rng, double sd) {
  if (sd <= 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sd)(rng);
}

void add_noise(std::vector<VibrationTrace>& traces, double sd, std::mt19937_64& rng) {
  if (sd <= 0.0) return;
  std::normal_distribution<double> dist(0.0, sd);
  for (auto& t : traces) {
    for (auto& s : t.samples) s += dist(rng);
  }
}

WalkSimulation record(const BeamModel& beam, const AttenuationModel& attenuation, const SensorLayout& sensors,
                      std::vector<ForceEvent> forces, std::vector<GroundTruthStep> steps,
                      const SimulationSettings& settings, std::mt19937_64& rng) {
  double end = 0.0;
  for (const auto& f : forces) end = std::max(end, f.onset_s + f.pulse.support_s());
  const double duration = end + settings.tail_s;
  WalkSimulation sim;
  for (std::size_t i = 0; i < sensors.positions_m.size(); ++i) {
    auto trace = modal_response(beam, forces, sensors.positions_m[i], settings.sample_rate_hz, duration, attenuation,
                                settings.quantity);
    trace.sensor_id = sensors.sensor_id(i);
    sim.traces.push_back(std::move(trace));
  }
  add_noise(sim.traces, settings.noise_std, rng);
  sim.forces = std::move(forces);
  sim.steps = std::move(steps);
  return sim;
}

std::string location_label(const BeamModel& beam, double x) {
  // nine bins along the span
  const int bin = std::clamp(static_cast<int>(x / beam.length_m * 9.0), 0, 8);
  return "bin" + std::to_string(bin + 1);
}

}  // namespace

void BeamModel::validate() const {
  if (!(youngs_modulus_pa > 0 && second_moment_m4 > 0 && density_kg_m3 > 0 && area_m2 > 0 && length_m > 0)) {
    throw ConfigError("beam constants must be positive");
  }
  if (damping_per_s < 0) throw ConfigError("beam damping must be non-negative");
  if (n_modes < 1) throw ConfigError("beam needs at least one mode");
}

double BeamModel::natural_frequency_rad_s(int n) const {
  const double k = n * kPi / length_m;
  return k * k * std::sqrt(youngs_modulus_pa * second_moment_m4 / (density_kg_m3 * area_m2));
}

double BeamModel::mode_shape(int n, double x) const { return std::sin(n * kPi * x / length_m); }

double AttenuationModel::factor(double omega_rad_s, double distance_m) const {
  return std::exp(-0.5 * alpha * distance_m * omega_rad_s);
}

void PulseShape::validate() const {
  if (!(duration_s > 0.0)) throw ConfigError("pulse duration must be positive");
  if (toe_delay_frac < 0.0 || toe_ratio < 0.0) throw ConfigError("toe parameters must be non-negative");
}

double PulseShape::value(double tau) const {
  auto hann = [](double u) { return (u <= 0.0 || u >= 1.0) ? 0.0 : 0.5 * (1.0 - std::cos(2.0 * kPi * u)); };
  double v = hann(tau / duration_s);
  if (toe_ratio > 0.0) v += toe_ratio * hann((tau - toe_delay_frac * duration_s) / duration_s);
  return v;
}

double PulseShape::support_s() const { return duration_s * (toe_ratio > 0.0 ? 1.0 + toe_delay_frac : 1.0); }

double ForceEvent::force_at(double t) const { return amplitude_n * pulse.value(t - onset_s); }

void PersonGaitModel::validate() const {
  if (!(step_length_m > 0.0) || !(cadence_hz > 0.0) || !(base_amplitude_n > 0.0)) {
    throw ConfigError("gait of " + person_id + ": step length, cadence and amplitude must be positive");
  }
  if (amplitude_jitter < 0 || timing_jitter_s < 0 || location_jitter_m < 0 || duration_jitter < 0) {
    throw ConfigError("gait of " + person_id + ": jitter scales must be non-negative");
  }
  pulse.validate();
}

VibrationTrace modal_response(const BeamModel& beam, std::span<const ForceEvent> forces, double sensor_position_m,
                              double sample_rate_hz, double duration_s, const AttenuationModel& attenuation,
                              SensorQuantity quantity) {
  beam.validate();
  const double L = beam.length_m;
  if (!(sensor_position_m > 0.0 && sensor_position_m < L)) {
    throw ConfigError("sensor position " + std::to_string(sensor_position_m) + " outside the beam");
  }
  for (const auto& f : forces) {
    if (!(f.location_m > 0.0 && f.location_m < L)) {
      throw ConfigError("force location " + std::to_string(f.location_m) + " outside the beam");
    }
    f.pulse.validate();
  }
  if (!(sample_rate_hz > 0.0) || !(duration_s > 0.0)) throw ConfigError("sample rate and duration must be positive");

  const double h = 1.0 / sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::ceil(duration_s * sample_rate_hz));

  // Sampled force histories, only over each pulse's support.
  struct Sampled {
    std::size_t first = 0;
    std::vector<double> values;
  };
  std::vector<Sampled> sampled;
  sampled.reserve(forces.size());
  for (const auto& f : forces) {
    Sampled s;
    s.first = static_cast<std::size_t>(std::max(0.0, std::floor(f.onset_s * sample_rate_hz)));
    const auto last = std::min(n, static_cast<std::size_t>(std::ceil((f.onset_s + f.pulse.support_s()) * sample_rate_hz)) + 1);
    for (std::size_t k = s.first; k < last; ++k) s.values.push_back(f.force_at(static_cast<double>(k) * h));
    sampled.push_back(std::move(s));
  }

  VibrationTrace trace;
  trace.sample_rate_hz = sample_rate_hz;
  trace.sensor_position_m = sensor_position_m;
  trace.samples.assign(n, 0.0);

  const double modal_mass_inv = 2.0 / (beam.density_kg_m3 * beam.area_m2 * L);
  const bool velocity = quantity == SensorQuantity::Velocity;
  std::vector<double> u(n);
  for (int mode = 1; mode <= beam.n_modes; ++mode) {
    const double omega = beam.natural_frequency_rad_s(mode);
    const double out_gain = beam.mode_shape(mode, sensor_position_m);
    std::fill(u.begin(), u.end(), 0.0);
    for (std::size_t i = 0; i < forces.size(); ++i) {
      const double gain = modal_mass_inv * beam.mode_shape(mode, forces[i].location_m) *
                          attenuation.factor(omega, std::abs(sensor_position_m - forces[i].location_m));
      const auto& s = sampled[i];
      for (std::size_t k = 0; k < s.values.size(); ++k) u[s.first + k] += gain * s.values[k];
    }
    const auto step = discretize(omega, beam.damping_per_s, h);
    double q = 0.0, v = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      trace.samples[k] += out_gain * (velocity ? v : q);
      const double qn = step.phi00 * q + step.phi01 * v + step.gamma0 * u[k];
      const double vn = step.phi10 * q + step.phi11 * v + step.gamma1 * u[k];
      q = qn;
      v = vn;
    }
  }
  return trace;
}

VibrationTrace modal_response(const BeamModel& beam, const ForceEvent& force, double sensor_position_m,
                              double sample_rate_hz, double duration_s, const AttenuationModel& attenuation,
                              SensorQuantity quantity) {
  return modal_response(beam, std::span<const ForceEvent>(&force, 1), sensor_position_m, sample_rate_hz, duration_s,
                        attenuation, quantity);
}

WalkSimulation simulate_walk(const BeamModel& beam, const AttenuationModel& attenuation, const PersonGaitModel& gait,
                             const SensorLayout& sensors, double start_m, std::uint64_t seed,
                             const SimulationSettings& settings) {
  beam.validate();
  gait.validate();
  const double lo = settings.edge_margin_m, hi = beam.length_m - settings.edge_margin_m;
  if (!(start_m >= lo && start_m <= hi)) {
    throw ConfigError("walk of " + gait.person_id + " places every step off the beam");
  }
  std::mt19937_64 rng(seed);
  std::vector<ForceEvent> forces;
  std::vector<GroundTruthStep> steps;
  double last_onset = -1.0;
  for (int k = 0;; ++k) {
    const double nominal = start_m + k * gait.step_length_m;
    if (nominal > hi) break;
    ForceEvent f;
    f.kind = ExcitationKind::Footstep;
    f.location_m = std::clamp(nominal + normal(rng, gait.location_jitter_m), lo, hi);
    f.amplitude_n = gait.base_amplitude_n * std::max(0.1, 1.0 + normal(rng, gait.amplitude_jitter));
    f.pulse = gait.pulse;
    f.pulse.duration_s = gait.pulse.duration_s * std::max(0.2, 1.0 + normal(rng, gait.duration_jitter));
    f.onset_s = std::max(settings.lead_in_s + k / gait.cadence_hz + normal(rng, gait.timing_jitter_s), 0.0);
    f.onset_s = std::max(f.onset_s, last_onset + 0.5 / gait.cadence_hz);
    last_onset = f.onset_s;
    steps.push_back({f.onset_s, f.onset_s + 0.5 * f.pulse.duration_s, f.location_m, location_label(beam, f.location_m)});
    forces.push_back(f);
  }
  return record(beam, attenuation, sensors, std::move(forces), std::move(steps), settings, rng);
}

std::vector<double> location_grid(const BeamModel& beam, int count) {
  if (count < 1) throw ConfigError("location grid needs at least one location");
  std::vector<double> xs(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) xs[static_cast<std::size_t>(i)] = beam.length_m * (i + 1) / (count + 1);
  return xs;
}

std::vector<ImpulseRecord> ball_drop_sequence(const BeamModel& beam, const AttenuationModel& attenuation,
                                              std::span<const double> locations, int repeats,
                                              const SensorLayout& sensors, std::uint64_t seed,
                                              const BallDropSettings& drop, const SimulationSettings& settings) {
  if (locations.empty()) throw ConfigError("ball drop sequence needs at least one location");
  if (repeats < 1) throw ConfigError("ball drop sequence needs at least one repeat");
  std::mt19937_64 rng(seed);
  std::vector<ImpulseRecord> out;
  for (std::size_t li = 0; li < locations.size(); ++li) {
    for (int r = 0; r < repeats; ++r) {
      ForceEvent f;
      f.kind = ExcitationKind::BallDrop;
      f.location_m = locations[li];
      f.amplitude_n = drop.amplitude_n * (1.0 + std::clamp(normal(rng, drop.amplitude_jitter),
                                                           -drop.amplitude_jitter, drop.amplitude_jitter));
      f.pulse = PulseShape{drop.pulse_duration_s, 0.0, 0.0};
      f.onset_s = settings.lead_in_s;
      GroundTruthStep gt{f.onset_s, f.onset_s + 0.5 * f.pulse.duration_s, f.location_m,
                         "loc" + std::to_string(li + 1)};
      ImpulseRecord rec;
      rec.location_index = li;
      rec.location_m = locations[li];
      rec.simulation = record(beam, attenuation, sensors, {f}, {gt}, settings, rng);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

std::vector<ImpulseRecord> footstep_sequence(const BeamModel& beam, const AttenuationModel& attenuation,
                                             const PersonGaitModel& gait, std::span<const double> locations,
                                             int repeats, const SensorLayout& sensors, std::uint64_t seed,
                                             const SimulationSettings& settings) {
  if (locations.empty()) throw ConfigError("footstep sequence needs at least one location");
  if (repeats < 1) throw ConfigError("footstep sequence needs at least one repeat");
  gait.validate();
  std::mt19937_64 rng(seed);
  std::vector<ImpulseRecord> out;
  for (std::size_t li = 0; li < locations.size(); ++li) {
    for (int r = 0; r < repeats; ++r) {
      ForceEvent f;
      f.kind = ExcitationKind::Footstep;
      f.location_m = std::clamp(locations[li] + normal(rng, gait.location_jitter_m), 1e-3 * beam.length_m,
                                (1.0 - 1e-3) * beam.length_m);
      f.amplitude_n = gait.base_amplitude_n * std::max(0.1, 1.0 + normal(rng, gait.amplitude_jitter));
      f.pulse = gait.pulse;
      f.pulse.duration_s = gait.pulse.duration_s * std::max(0.2, 1.0 + normal(rng, gait.duration_jitter));
      f.onset_s = settings.lead_in_s;
      GroundTruthStep gt{f.onset_s, f.onset_s + 0.5 * f.pulse.duration_s, f.location_m,
                         "loc" + std::to_string(li + 1)};
      ImpulseRecord rec;
      rec.location_index = li;
      rec.location_m = locations[li];
      rec.simulation = record(beam, attenuation, sensors, {f}, {gt}, settings, rng);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

FeatureVector apply_attenuation(const FeatureVector& features, const AttenuationModel& model, double distance_m) {
  if (distance_m < 0.0) throw ConfigError("attenuation distance must be non-negative");
  if (features.band_edges_hz.size() != static_cast<std::size_t>(features.values.size()) + 1) {
    throw DataError("feature vector band edges do not match its values");
  }
  FeatureVector out = features;
  if (distance_m == 0.0) return out;
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    const auto b = static_cast<std::size_t>(i);
    const double centre = 0.5 * (features.band_edges_hz[b] + features.band_edges_hz[b + 1]);
    out.values[i] *= model.factor(2.0 * kPi * centre, distance_m);
  }
  return out;
}

}  // namespace vibestep
