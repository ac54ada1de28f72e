#ifndef VIBESTEP_BEAM_SIM_HPP
#define VIBESTEP_BEAM_SIM_HPP

#include "vibestep/data_model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vibestep {

// Damped simply-supported Euler-Bernoulli beam:
//   E I w'''' + rho A eta w_t + rho A w_tt = P(t) delta(x - x_f)
struct BeamModel {
  double youngs_modulus_pa = 1.1e10;
  double second_moment_m4 = 8.0e-4;
  double density_kg_m3 = 500.0;
  double area_m2 = 0.6;
  double damping_per_s = 20.0;
  double length_m = 7.0;
  int n_modes = 20;

  void validate() const;
  // (n pi / L)^2 sqrt(E I / (rho A)), n >= 1.
  double natural_frequency_rad_s(int n) const;
  double mode_shape(int n, double x) const;
};

// Frequency-dependent propagation loss on amplitudes: exp(-alpha l omega / 2).
struct AttenuationModel {
  double alpha = 0.0;  // per metre per rad/s

  double factor(double omega_rad_s, double distance_m) const;
};

// Raised-cosine heel strike followed by an optional toe-off hump that starts
// at toe_delay_frac * duration and has toe_ratio of the heel amplitude.
struct PulseShape {
  double duration_s = 0.06;
  double toe_delay_frac = 0.0;
  double toe_ratio = 0.0;

  void validate() const;
  // Unit-amplitude force at time tau after onset.
  double value(double tau) const;
  double support_s() const;
};

struct ForceEvent {
  ExcitationKind kind = ExcitationKind::Footstep;
  double location_m = 0.0;
  double amplitude_n = 1.0;
  PulseShape pulse;
  double onset_s = 0.0;

  double force_at(double t) const;
};

struct PersonGaitModel {
  std::string person_id;
  double step_length_m = 0.7;
  double cadence_hz = 1.8;
  double base_amplitude_n = 700.0;
  PulseShape pulse;
  // Per-step jitter standard deviations. Amplitude and duration are relative.
  double amplitude_jitter = 0.05;
  double timing_jitter_s = 0.01;
  double location_jitter_m = 0.03;
  double duration_jitter = 0.02;

  void validate() const;
};

// Displacement, or velocity as measured by a geophone.
enum class SensorQuantity { Displacement, Velocity };

struct SensorLayout {
  std::vector<double> positions_m;

  std::string sensor_id(std::size_t i) const { return "s" + std::to_string(i); }
};

struct SimulationSettings {
  double sample_rate_hz = 2000.0;
  double lead_in_s = 0.3;   // quiet time before the first impulse
  double tail_s = 0.6;      // recorded time after the last impulse
  double noise_std = 0.0;   // additive white Gaussian noise, trace units
  double edge_margin_m = 0.5;
  SensorQuantity quantity = SensorQuantity::Velocity;
};

// Response at sensor_position_m to a set of forces by modal superposition.
// Every mode is advanced with the exact zero-order-hold recurrence of its
// damped oscillator. When attenuation is given, mode n of each force is scaled
// by exp(-alpha |x_s - x_f| omega_n / 2).
VibrationTrace modal_response(const BeamModel& beam, std::span<const ForceEvent> forces, double sensor_position_m,
                              double sample_rate_hz, double duration_s, const AttenuationModel& attenuation = {},
                              SensorQuantity quantity = SensorQuantity::Displacement);

VibrationTrace modal_response(const BeamModel& beam, const ForceEvent& force, double sensor_position_m,
                              double sample_rate_hz, double duration_s, const AttenuationModel& attenuation = {},
                              SensorQuantity quantity = SensorQuantity::Displacement);

struct WalkSimulation {
  std::vector<VibrationTrace> traces;  // one per sensor
  std::vector<ForceEvent> forces;
  std::vector<GroundTruthStep> steps;
};

// Straight walk along the beam starting at start_m (the first step lands
// there before jitter). Deterministic given seed.
WalkSimulation simulate_walk(const BeamModel& beam, const AttenuationModel& attenuation, const PersonGaitModel& gait,
                             const SensorLayout& sensors, double start_m, std::uint64_t seed,
                             const SimulationSettings& settings = {});

struct BallDropSettings {
  double amplitude_n = 40.0;
  double pulse_duration_s = 0.005;
  double amplitude_jitter = 0.001;  // relative, "almost identical" drops
};

// One impulse recorded on every sensor.
struct ImpulseRecord {
  std::size_t location_index = 0;
  double location_m = 0.0;
  WalkSimulation simulation;
};

// repeats drops at each location; records are ordered location-major.
std::vector<ImpulseRecord> ball_drop_sequence(const BeamModel& beam, const AttenuationModel& attenuation,
                                               std::span<const double> locations, int repeats,
                                               const SensorLayout& sensors, std::uint64_t seed,
                                               const BallDropSettings& drop = {},
                                               const SimulationSettings& settings = {});

// The same person stepping repeatedly on each location with natural gait
// jitter; the footstep counterpart of ball_drop_sequence.
std::vector<ImpulseRecord> footstep_sequence(const BeamModel& beam, const AttenuationModel& attenuation,
                                             const PersonGaitModel& gait, std::span<const double> locations,
                                             int repeats, const SensorLayout& sensors, std::uint64_t seed,
                                             const SimulationSettings& settings = {});

// locations evenly spaced strictly inside (0, L).
std::vector<double> location_grid(const BeamModel& beam, int count);

// Band i scaled by exp(-alpha l omega_i / 2) with omega_i the band centre.
FeatureVector apply_attenuation(const FeatureVector& features, const AttenuationModel& model, double distance_m);

}  // namespace vibestep

#endif  // VIBESTEP_BEAM_SIM_HPP
